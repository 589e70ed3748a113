#include "fbmxcov/run_config.hpp"
#include "fbmxcov/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using nlohmann::json;

namespace {

// Flags that were given on the command line, keyed by config name. They win
// over the --config file.
struct Flags {
  json overrides = json::object();
  std::vector<std::function<void()>> collectors;

  template <typename T>
  CLI::Option* add(CLI::App& app, const std::string& names, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app.add_option(names, *value, help);
    collectors.push_back([this, opt, value, key] {
      if (opt->count() > 0) {
        overrides[key] = *value;
      }
    });
    return opt;
  }

  void collect() {
    for (auto& c : collectors) {
      c();
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-covariance of divergence integrals against fractional Brownian motion"};
  app.set_version_flag("--version", fbmxcov::kVersion);
  app.require_subcommand(0, 1);

  Flags flags;
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; command-line flags override it")
      ->check(CLI::ExistingFile);
  flags.add<double>(app, "--hurst", "hurst", "Hurst index H in (1/2, 1)");
  flags.add<double>(app, "--t", "t", "first time");
  flags.add<double>(app, "--s", "s", "second time");
  flags.add<std::string>(app, "-F", "F", "coefficient F, e.g. sgn, id, const:1, sum:(tanh)+(steps:0:2)");
  flags.add<std::string>(app, "-G", "G", "coefficient G");
  flags.add<int>(app, "--base-cells", "base_cells", "quadrature cells per axis before refinement");
  flags.add<double>(app, "--grading", "grading_exponent", "diagonal grading exponent (default from H)");
  flags.add<int>(app, "--gauss-nodes", "gauss_nodes", "Gauss-Legendre nodes per cell");
  flags.add<double>(app, "--target", "target_rel_error", "target relative error of the quadrature");
  flags.add<std::size_t>(app, "--steps,--n", "steps", "time steps per simulated path");
  flags.add<std::size_t>(app, "--paths", "n_paths", "number of simulated paths");
  flags.add<std::uint64_t>(app, "--seed", "seed", "root seed");
  flags.add<std::string>(app, "--generator", "generator", "cholesky or circulant");
  flags.add<bool>(app, "--compare", "compare", "mc: compare with the quadrature value")
      ->expected(0, 1)
      ->default_str("true");
  flags.add<int>(app, "--points", "surface_points", "surface: points per axis");
  flags.add<std::vector<std::vector<double>>>(app, "--probe", "probes", "notfbm: probe pair t1 s1 t2 s2")
      ->expected(4)
      ->allow_extra_args(false);
  flags.add<std::vector<double>>(app, "--htilde", "htilde_grid", "notfbm: candidate indices");
  flags.add<std::vector<double>>(app, "--eps", "eps_ladder", "limit: decreasing epsilon ladder");
  flags.add<std::size_t>(app, "--trace-cells", "trace_cells", "trace-check: grid cells");
  flags.add<std::size_t>(app, "--trace-samples", "trace_samples", "trace-check: random kernel pairs");
  flags.add<std::string>(app, "-o,--output", "output", "output file (default: standard output)");
  flags.add<std::string>(app, "--format", "format", "csv or json");
  flags.add<unsigned>(app, "--threads", "threads", "worker threads (default: all cores)");

  for (const char* name : {"covar", "surface", "mc", "notfbm", "limit", "trace-check", "finiteness"}) {
    app.add_subcommand(name)->fallthrough();
  }
  app.get_subcommand("covar")->description("cross-covariance by quadrature");
  app.get_subcommand("surface")->description("covariance on a grid of (t, s)");
  app.get_subcommand("mc")->description("Monte Carlo estimate from simulated paths");
  app.get_subcommand("notfbm")->description("check whether the integral process can be an fBm");
  app.get_subcommand("limit")->description("study the limit H -> 1/2");
  app.get_subcommand("trace-check")->description("compare operator traces with a dense oracle");
  app.get_subcommand("finiteness")->description("finiteness and scaling of the trace bound");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  flags.collect();

  json doc = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
      std::cerr << "error: " << config_path << ": " << e.what() << '\n';
      return 1;
    }
    if (!doc.is_object()) {
      std::cerr << "error: " << config_path << " is not a JSON object\n";
      return 1;
    }
  }
  doc.update(flags.overrides);
  const auto subs = app.get_subcommands();
  if (!subs.empty()) {
    doc["command"] = subs.front()->get_name();
  } else if (!doc.contains("command")) {
    std::cerr << "error: no command given\n" << app.help();
    return 1;
  }

  fbmxcov::RunConfig cfg;
  try {
    cfg = fbmxcov::config_from_json(doc.dump());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  const fbmxcov::RunOutcome outcome = fbmxcov::run(cfg);
  if (outcome.exit_code != 0) {
    std::cerr << "error: " << outcome.message << '\n';
  } else if (!outcome.message.empty() && !cfg.output.empty()) {
    std::cerr << outcome.message << '\n';
  }
  return outcome.exit_code;
}
