#include "fbmxcov/function_spec.hpp"
#include "fbmxcov/io.hpp"
#include "fbmxcov/run_config.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fbmxcov;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fbmxcov_cli_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("function specs") {
  CHECK(parse_function_spec("const:2.5")(-3.0) == 2.5);
  CHECK(parse_function_spec("const:+1e-1")(0.0) == 0.1);
  CHECK(parse_function_spec("id")(1.75) == 1.75);
  CHECK(parse_function_spec("sgn")(-0.5) == -1.0);
  CHECK(parse_function_spec("sgn")(0.5) == 1.0);
  CHECK(parse_function_spec("tanh")(0.3) == doctest::Approx(std::tanh(0.3)));
  CHECK(parse_function_spec("sin")(0.3) == doctest::Approx(std::sin(0.3)));
  const auto st = parse_function_spec("steps:-1:2,0.5:-3");
  CHECK(st(-2.0) == 0.0);
  CHECK(st(-1.0) == 2.0);
  CHECK(st(0.0) == 2.0);
  CHECK(st(0.5) == -1.0);
  CHECK(st.jumps().size() == 2);
  const auto sum = parse_function_spec("sum:(sin)+(sum:(const:1)+(sgn))");
  CHECK(sum(0.4) == doctest::Approx(std::sin(0.4) + 2.0));
  CHECK(sum.jumps().size() == 1);
  CHECK(sum.has_smooth_part());
}

TEST_CASE("function spec errors") {
  for (const char* bad : {"", "cos", "const:", "const:x", "steps:1:2,0:1", "steps:1", "sum:(sgn)+(id",
                          "sum:(sgn)(id)", "id ", "const:1e999"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_function_spec(bad), SpecParseError);
  }
  try {
    parse_function_spec("sum:(sgn)+(const:1");
    FAIL("no error");
  } catch (const SpecParseError& e) {
    CHECK(e.position() == 18);
    CHECK(std::string(e.what()).find("position 18") != std::string::npos);
  }
}

TEST_CASE("config parsing is strict") {
  const auto c = config_from_json(R"({"command":"mc","hurst":0.6,"F":"sgn","steps":64,"seed":7})");
  CHECK(c.command == Command::mc);
  CHECK(c.hurst == 0.6);
  CHECK(c.F_spec == "sgn");
  CHECK(c.G_spec == "const:1");
  CHECK(c.steps == 64);
  CHECK(c.seed == 7);
  CHECK_THROWS_AS(config_from_json(R"({"hurts":0.6})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"hurst":"0.6"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"hurst":1.2})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"steps":-4})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"command":"plot"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"t":0})"), ConfigError);
  CHECK_THROWS(config_from_json("[1,2"));
  CHECK(command_from_string("trace-check") == Command::trace_check);
  CHECK(to_string(Command::trace_check) == "trace-check");
}

TEST_CASE("config json round trip") {
  RunConfig c;
  c.command = Command::surface;
  c.hurst = 0.81;
  c.F_spec = "steps:0:1";
  c.grading_exponent = 1.5;
  c.probes = {{2, 1, 3, 2}};
  c.eps_ladder = {0.2, 0.1};
  c.format = Format::json;
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.grading_exponent == 1.5);
  CHECK(back.probes == c.probes);
}

TEST_CASE("runs embed their config") {
  for (auto fmt : {Format::csv, Format::json}) {
    RunConfig c;
    c.F_spec = "id";
    c.G_spec = "id";
    c.t = 2;
    c.format = fmt;
    c.output = temp_path(fmt == Format::csv ? "covar.csv" : "covar.json").string();
    const auto out = run(c);
    CHECK(out.exit_code == 0);
    const auto back = read_embedded_config(c.output);
    CHECK(config_to_json(back) == config_to_json(c));
    const auto text = slurp(c.output);
    if (fmt == Format::json) {
      const auto doc = nlohmann::json::parse(text);
      CHECK(doc.at("status") == "ok");
      CHECK(doc.at("result").at("value").get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    } else {
      CHECK(text.find("# status ok") != std::string::npos);
      CHECK(text.find("tau_or_t,sigma_or_s,value,isometry_term,trace_term,est_rel_error\n2,1,") !=
            std::string::npos);
    }
    std::filesystem::remove(c.output);
  }
}

TEST_CASE("exit codes") {
  RunConfig c;
  c.output = temp_path("exit.csv").string();
  c.F_spec = "sum:(sgn";
  CHECK(run(c).exit_code == 1);
  CHECK_FALSE(std::filesystem::exists(c.output));
  c.F_spec = "sgn";
  c.G_spec = "sgn";
  c.t = 2;
  c.target_rel_error = 1e-12;
  const auto out = run(c);
  CHECK(out.exit_code == 2);
  CHECK(out.message.find("did not converge") != std::string::npos);
  const auto text = slurp(c.output);
  CHECK(text.find("# status nonconverged") != std::string::npos);
  std::filesystem::remove(c.output);
}

TEST_CASE("other commands") {
  RunConfig c;
  c.format = Format::json;
  c.output = temp_path("cmd.json").string();
  c.command = Command::notfbm;
  c.F_spec = c.G_spec = "sgn";
  REQUIRE(run(c).exit_code == 0);
  CHECK(nlohmann::json::parse(slurp(c.output)).at("result").at("not_fbm") == true);
  c.command = Command::trace_check;
  c.trace_samples = 5;
  REQUIRE(run(c).exit_code == 0);
  c.command = Command::finiteness;
  REQUIRE(run(c).exit_code == 0);
  c.command = Command::mc;
  c.F_spec = c.G_spec = "const:1";
  c.steps = 64;
  c.n_paths = 2000;
  REQUIRE(run(c).exit_code == 0);
  const auto mc = nlohmann::json::parse(slurp(c.output)).at("result");
  CHECK(std::abs(mc.at("estimate").get<double>() - 1.0) < 4 * mc.at("std_error").get<double>());
  std::filesystem::remove(c.output);
}

TEST_CASE("atomic writes") {
  const auto target = temp_path("atomic.txt");
  io::atomic_write(target, [](std::ostream& os) { os << "first"; });
  CHECK(slurp(target) == "first");
  CHECK_THROWS(io::atomic_write(target, [](std::ostream& os) {
    os << "partial";
    throw std::runtime_error("interrupted");
  }));
  CHECK(slurp(target) == "first");
  for (const auto& entry : std::filesystem::directory_iterator(target.parent_path())) {
    CHECK(entry.path().filename().string().find(".fbmxcov_cli_atomic.txt.tmp") == std::string::npos);
  }
  std::filesystem::remove(target);
}

}
