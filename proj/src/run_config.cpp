#include "fbmxcov/run_config.hpp"

#include "fbmxcov/analysis.hpp"
#include "fbmxcov/errors.hpp"
#include "fbmxcov/function_spec.hpp"
#include "fbmxcov/hs_operators.hpp"
#include "fbmxcov/io.hpp"
#include "fbmxcov/quadrature.hpp"
#include "fbmxcov/rng.hpp"
#include "fbmxcov/version.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fbmxcov {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Command, const char*>, 7> kCommands{{
    {Command::covar, "covar"},
    {Command::surface, "surface"},
    {Command::mc, "mc"},
    {Command::notfbm, "notfbm"},
    {Command::limit, "limit"},
    {Command::trace_check, "trace-check"},
    {Command::finiteness, "finiteness"},
}};

const json& require(const json& v, bool ok, const std::string& key, const char* type) {
  if (!ok) {
    throw ConfigError("config key '" + key + "' must be " + type + ", got " + v.dump());
  }
  return v;
}

double get_number(const json& v, const std::string& key) {
  return require(v, v.is_number(), key, "a number").get<double>();
}

template <typename Int>
Int get_count(const json& v, const std::string& key) {
  require(v, v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), key,
          "a non-negative integer");
  return v.get<Int>();
}

std::string get_string(const json& v, const std::string& key) {
  return require(v, v.is_string(), key, "a string").get<std::string>();
}

std::vector<double> get_numbers(const json& v, const std::string& key) {
  require(v, v.is_array(), key, "an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    out.push_back(get_number(x, key));
  }
  return out;
}

std::string format_value(const json& v) {
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  if (v.is_string()) {
    return v.get<std::string>();
  }
  if (v.is_null()) {
    return "";
  }
  return v.dump();
}

// Everything a command produces: a table for CSV and a richer object for JSON.
struct Artifact {
  std::vector<std::string> header;
  std::vector<std::vector<json>> rows;
  json result = json::object();
  bool converged = true;
  std::string message;
};

void write_artifact(const RunConfig& cfg, const Artifact& a) {
  const std::string config_text = config_to_json(cfg);
  auto emit = [&](std::ostream& os) {
    if (cfg.format == Format::json) {
      json doc;
      doc["fbmxcov_version"] = kVersion;
      doc["config"] = json::parse(config_text);
      doc["status"] = a.converged ? "ok" : "nonconverged";
      if (!a.message.empty()) {
        doc["message"] = a.message;
      }
      doc["result"] = a.result;
      os << doc.dump(2) << '\n';
      return;
    }
    os << "# fbmxcov " << kVersion << '\n';
    os << "# config " << config_text << '\n';
    os << "# status " << (a.converged ? "ok" : "nonconverged") << '\n';
    if (!a.message.empty()) {
      os << "# message " << a.message << '\n';
    }
    for (std::size_t i = 0; i < a.header.size(); ++i) {
      os << (i ? "," : "") << a.header[i];
    }
    os << '\n';
    for (const auto& row : a.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        os << (i ? "," : "") << format_value(row[i]);
      }
      os << '\n';
    }
  };
  if (cfg.output.empty()) {
    emit(std::cout);
    std::cout.flush();
  } else {
    io::atomic_write(cfg.output, emit);
  }
}

const std::vector<std::string> kCovarianceHeader{"tau_or_t", "sigma_or_s", "value",
                                                 "isometry_term", "trace_term", "est_rel_error"};

json covariance_json(double t, double s, const CovarianceResult& r) {
  return {{"t", t},
          {"s", s},
          {"value", r.value},
          {"isometry_term", r.isometry_term},
          {"trace_term", r.trace_term},
          {"est_rel_error", r.est_rel_error}};
}

std::vector<json> covariance_row(double t, double s, const CovarianceResult& r) {
  return {t, s, r.value, r.isometry_term, r.trace_term, r.est_rel_error};
}

Artifact run_covar(const RunConfig& cfg, const GFunction& F, const GFunction& G, const HurstParameter& H) {
  Artifact a;
  a.header = kCovarianceHeader;
  CovarianceResult r;
  try {
    r = cross_covariance(F, G, cfg.t, cfg.s, H, cfg.quadrature());
  } catch (const NonConvergenceError& e) {
    r = e.result();
    a.converged = false;
    a.message = e.what();
  }
  a.rows.push_back(covariance_row(cfg.t, cfg.s, r));
  a.result = covariance_json(cfg.t, cfg.s, r);
  return a;
}

Artifact run_surface(const RunConfig& cfg, const GFunction& F, const GFunction& G, const HurstParameter& H) {
  Artifact a;
  a.header = kCovarianceHeader;
  std::vector<double> ts, ss;
  for (int i = 1; i <= cfg.surface_points; ++i) {
    ts.push_back(cfg.t * i / cfg.surface_points);
    ss.push_back(cfg.s * i / cfg.surface_points);
  }
  const auto grid = covariance_surface(F, G, ts, ss, H, cfg.quadrature());
  a.result = json::array();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (std::size_t j = 0; j < ss.size(); ++j) {
      a.rows.push_back(covariance_row(ts[i], ss[j], grid[i][j]));
      a.result.push_back(covariance_json(ts[i], ss[j], grid[i][j]));
    }
  }
  return a;
}

std::filesystem::path cache_file(const std::filesystem::path& dir, const RunConfig& cfg, double horizon) {
  std::ostringstream name;
  name.precision(17);
  name << "ensemble_H" << cfg.hurst << "_T" << horizon << "_n" << cfg.steps << "_p" << cfg.n_paths << "_seed"
       << cfg.seed << "_" << to_string(cfg.generator) << ".fbme";
  return dir / name.str();
}

Artifact run_mc(const RunConfig& cfg, const GFunction& F, const GFunction& G, const HurstParameter& H) {
  EnsembleParams params;
  params.steps = cfg.steps;
  params.n_paths = cfg.n_paths;
  params.seed = Seed{cfg.seed};
  params.generator = cfg.generator;
  params.threads = cfg.threads;
  const double horizon = std::max(cfg.t, cfg.s);

  McEstimate mc;
  std::string ensemble_source = "streamed";
  if (const auto dir = ensemble_cache_dir()) {
    const auto file = cache_file(*dir, cfg, horizon);
    PathEnsemble ensemble = [&] {
      if (std::filesystem::exists(file)) {
        ensemble_source = "cache:" + file.string();
        return read_ensemble(file, horizon);
      }
      ensemble_source = "generated:" + file.string();
      const auto sampler = make_sampler(cfg.generator, TimeGrid::uniform(horizon, cfg.steps), H, params.seed);
      PathEnsemble e = generate(*sampler, cfg.n_paths, cfg.threads);
      std::filesystem::create_directories(*dir);
      write_ensemble(file, e);
      return e;
    }();
    mc = mc_cross_covariance(F, G, cfg.t, cfg.s, ensemble, cfg.threads);
  } else {
    mc = mc_cross_covariance(F, G, cfg.t, cfg.s, H, params);
  }

  Artifact a;
  a.header = {"t", "s", "estimate", "std_error", "n_paths"};
  std::vector<json> row{cfg.t, cfg.s, mc.estimate, mc.std_error, mc.n_paths};
  a.result = {{"t", cfg.t},
              {"s", cfg.s},
              {"estimate", mc.estimate},
              {"std_error", mc.std_error},
              {"n_paths", mc.n_paths},
              {"ensemble", ensemble_source}};
  if (cfg.compare) {
    CovarianceResult q;
    try {
      q = cross_covariance(F, G, cfg.t, cfg.s, H, cfg.quadrature());
    } catch (const NonConvergenceError& e) {
      q = e.result();
      a.converged = false;
      a.message = e.what();
    }
    const double diff = std::abs(mc.estimate - q.value);
    const bool within = diff <= 3.0 * mc.std_error;
    a.header.insert(a.header.end(), {"quadrature", "difference", "within_3_stderr"});
    row.insert(row.end(), {q.value, diff, within});
    a.result["quadrature"] = covariance_json(cfg.t, cfg.s, q);
    a.result["difference"] = diff;
    a.result["within_3_stderr"] = within;
  }
  a.rows.push_back(std::move(row));
  return a;
}

Artifact run_notfbm(const RunConfig& cfg, const GFunction& F, const GFunction& G, const HurstParameter& H) {
  std::vector<ProbePair> probes;
  for (const auto& p : cfg.probes) {
    probes.push_back({p[0], p[1], p[2], p[3]});
  }
  const NotFbmReport r = not_fbm_test(F, G, H, probes, cfg.htilde_grid);
  Artifact a;
  a.header = {"t1", "s1", "t2", "s2", "first", "first_error", "second", "second_error", "rel_discrepancy",
              "separated"};
  json probes_json = json::array();
  for (const auto& p : r.probes) {
    a.rows.push_back({p.probe.t1, p.probe.s1, p.probe.t2, p.probe.s2, p.first.value, p.first.error_estimate,
                      p.second.value, p.second.error_estimate, p.rel_discrepancy, p.separated});
    probes_json.push_back({{"t1", p.probe.t1},
                           {"s1", p.probe.s1},
                           {"t2", p.probe.t2},
                           {"s2", p.probe.s2},
                           {"first", p.first.value},
                           {"first_error", p.first.error_estimate},
                           {"second", p.second.value},
                           {"second_error", p.second.error_estimate},
                           {"rel_discrepancy", p.rel_discrepancy},
                           {"separated", p.separated}});
  }
  json verdicts = json::array();
  for (const auto& v : r.verdicts) {
    verdicts.push_back({{"htilde", v.htilde}, {"refuted", v.refuted}});
  }
  a.result = {{"probes", probes_json},
              {"htilde_verdicts", verdicts},
              {"not_fbm", r.not_fbm},
              {"verdict", r.verdict},
              {"reasoning", r.reasoning}};
  a.message = r.verdict;
  return a;
}

Artifact run_limit(const RunConfig& cfg, const GFunction& F, const GFunction& G) {
  LimitStudyOptions options;
  options.quadrature.threads = cfg.threads;
  const LimitStudyReport r = brownian_limit_study(F, G, cfg.t, cfg.s, cfg.eps_ladder, options);
  Artifact a;
  a.header = {"epsilon", "value", "est_rel_error", "deviation", "max_alpha_gamma", "p_value", "p_rel_deviation"};
  json levels = json::array();
  for (const auto& l : r.levels) {
    const json p = l.p_value ? json(*l.p_value) : json(nullptr);
    const json pd = l.p_rel_deviation ? json(*l.p_rel_deviation) : json(nullptr);
    a.rows.push_back({l.epsilon, l.covariance.value, l.covariance.est_rel_error, l.deviation, l.max_alpha_gamma, p,
                      pd});
    levels.push_back({{"epsilon", l.epsilon},
                      {"covariance", covariance_json(cfg.t, cfg.s, l.covariance)},
                      {"deviation", l.deviation},
                      {"max_alpha_gamma", l.max_alpha_gamma},
                      {"p_value", p},
                      {"p_rel_deviation", pd}});
  }
  a.result = {{"target", r.target},
              {"extrapolated", r.extrapolated},
              {"p_limit", r.p_limit},
              {"deviations_weakly_decreasing", r.deviations_weakly_decreasing},
              {"alpha_gamma_ratios", r.alpha_gamma_ratios},
              {"levels", levels}};
  return a;
}

Artifact run_trace_check(const RunConfig& cfg, const HurstParameter& H) {
  const TimeGrid grid = TimeGrid::uniform(cfg.t, cfg.trace_cells);
  const auto n = static_cast<Eigen::Index>(cfg.trace_cells);
  auto random_kernel = [&](rng::PhiloxStream& stream) {
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        k(i, j) = 2.0 * stream.next_uniform() - 1.0;
      }
    }
    return KernelOperator(grid, std::move(k), 1.0);
  };
  Artifact a;
  a.header = {"sample", "trace", "oracle", "rel_diff"};
  double worst = 0.0;
  for (std::size_t i = 0; i < cfg.trace_samples; ++i) {
    rng::PhiloxStream stream(cfg.seed, i);
    const KernelOperator k1 = random_kernel(stream);
    const KernelOperator k2 = random_kernel(stream);
    const double tr = trace(compose(k1, k2, H), H);
    const double oracle = gram_trace_oracle(k1, k2, H);
    const double rel = std::abs(tr - oracle) / std::max(std::abs(oracle), 1e-300);
    worst = std::max(worst, rel);
    a.rows.push_back({i, tr, oracle, rel});
  }
  a.result = {{"cells", cfg.trace_cells}, {"samples", cfg.trace_samples}, {"max_rel_diff", worst}};
  return a;
}

Artifact run_finiteness(const RunConfig& cfg, const HurstParameter& H) {
  const QuadratureConfig q = cfg.quadrature();
  const FinitenessResult at_t = finiteness_check(H, cfg.t, q);
  const FinitenessResult at_1 = finiteness_check(H, 1.0, q);
  const double scaling = at_t.value / (std::pow(cfg.t, H.two_h()) * at_1.value);
  Artifact a;
  a.header = {"T", "value", "coarse_value", "rel_change"};
  a.rows.push_back({cfg.t, at_t.value, at_t.coarse_value, at_t.rel_change});
  a.rows.push_back({1.0, at_1.value, at_1.coarse_value, at_1.rel_change});
  a.result = {{"T", cfg.t},
              {"value", at_t.value},
              {"coarse_value", at_t.coarse_value},
              {"rel_change", at_t.rel_change},
              {"value_at_1", at_1.value},
              {"scaling_ratio", scaling}};
  return a;
}

}  // namespace

std::string to_string(Command c) {
  for (const auto& [cmd, name] : kCommands) {
    if (cmd == c) {
      return name;
    }
  }
  return "?";
}

Command command_from_string(const std::string& name) {
  for (const auto& [cmd, n] : kCommands) {
    if (name == n) {
      return cmd;
    }
  }
  throw ConfigError("unknown command '" + name + "'");
}

std::string to_string(Format f) { return f == Format::csv ? "csv" : "json"; }

Format format_from_string(const std::string& name) {
  if (name == "csv") {
    return Format::csv;
  }
  if (name == "json") {
    return Format::json;
  }
  throw ConfigError("unknown format '" + name + "', expected csv or json");
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) {
      throw ConfigError(what);
    }
  };
  const bool limit = command == Command::limit;
  if (!limit) {
    check(std::isfinite(hurst) && hurst > 0.5 && hurst < 1.0, "hurst must lie in (1/2, 1)");
  }
  check(std::isfinite(t) && t > 0.0 && std::isfinite(s) && s > 0.0, "t and s must be positive");
  check(base_cells >= 1, "base_cells must be at least 1");
  check(gauss_nodes >= 1 && gauss_nodes <= 64, "gauss_nodes must lie in [1, 64]");
  check(!grading_exponent || (std::isfinite(*grading_exponent) && *grading_exponent >= 1.0),
        "grading_exponent must be at least 1");
  check(std::isfinite(target_rel_error) && target_rel_error > 0.0, "target_rel_error must be positive");
  check(steps >= 1, "steps must be at least 1");
  check(n_paths >= 2, "n_paths must be at least 2");
  check(surface_points >= 1, "surface_points must be at least 1");
  check(trace_cells >= 1 && trace_cells <= 512, "trace_cells must lie in [1, 512]");
  check(generator != Generator::external, "generator must be cholesky or circulant");
  for (const auto& p : probes) {
    for (double v : p) {
      check(std::isfinite(v) && v > 0.0, "probe times must be positive");
    }
  }
  for (double h : htilde_grid) {
    check(std::isfinite(h) && h > 0.0 && h < 1.0, "htilde_grid entries must lie in (0, 1)");
  }
  if (limit) {
    check(!eps_ladder.empty(), "eps_ladder must not be empty");
    for (std::size_t i = 0; i < eps_ladder.size(); ++i) {
      check(eps_ladder[i] > 0.0 && eps_ladder[i] <= 0.25, "eps_ladder entries must lie in (0, 1/4]");
      check(i == 0 || eps_ladder[i] < eps_ladder[i - 1], "eps_ladder must be strictly decreasing");
    }
  }
  // Surface the spec errors before any computation starts.
  parse_function_spec(F_spec);
  parse_function_spec(G_spec);
}

QuadratureConfig RunConfig::quadrature() const {
  QuadratureConfig q;
  q.base_cells_per_axis = base_cells;
  q.diagonal_grading_exponent = grading_exponent;
  q.gauss_nodes_per_cell = gauss_nodes;
  q.target_rel_error = target_rel_error;
  q.threads = threads;
  return q;
}

RunConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  RunConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (key == "command") {
      c.command = command_from_string(get_string(v, key));
    } else if (key == "hurst") {
      c.hurst = get_number(v, key);
    } else if (key == "t") {
      c.t = get_number(v, key);
    } else if (key == "s") {
      c.s = get_number(v, key);
    } else if (key == "F") {
      c.F_spec = get_string(v, key);
    } else if (key == "G") {
      c.G_spec = get_string(v, key);
    } else if (key == "base_cells") {
      c.base_cells = get_count<int>(v, key);
    } else if (key == "grading_exponent") {
      c.grading_exponent = v.is_null() ? std::nullopt : std::optional<double>(get_number(v, key));
    } else if (key == "gauss_nodes") {
      c.gauss_nodes = get_count<int>(v, key);
    } else if (key == "target_rel_error") {
      c.target_rel_error = get_number(v, key);
    } else if (key == "steps") {
      c.steps = get_count<std::size_t>(v, key);
    } else if (key == "n_paths") {
      c.n_paths = get_count<std::size_t>(v, key);
    } else if (key == "seed") {
      c.seed = get_count<std::uint64_t>(v, key);
    } else if (key == "generator") {
      try {
        c.generator = generator_from_string(get_string(v, key));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "compare") {
      c.compare = require(v, v.is_boolean(), key, "a boolean").get<bool>();
    } else if (key == "surface_points") {
      c.surface_points = get_count<int>(v, key);
    } else if (key == "probes") {
      require(v, v.is_array(), key, "an array of [t1, s1, t2, s2]");
      c.probes.clear();
      for (const auto& p : v) {
        const auto xs = get_numbers(p, key);
        if (xs.size() != 4) {
          throw ConfigError("each probe must be [t1, s1, t2, s2]");
        }
        c.probes.push_back({xs[0], xs[1], xs[2], xs[3]});
      }
    } else if (key == "htilde_grid") {
      c.htilde_grid = get_numbers(v, key);
    } else if (key == "eps_ladder") {
      c.eps_ladder = get_numbers(v, key);
    } else if (key == "trace_cells") {
      c.trace_cells = get_count<std::size_t>(v, key);
    } else if (key == "trace_samples") {
      c.trace_samples = get_count<std::size_t>(v, key);
    } else if (key == "output") {
      c.output = get_string(v, key);
    } else if (key == "format") {
      c.format = format_from_string(get_string(v, key));
    } else if (key == "threads") {
      c.threads = get_count<unsigned>(v, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string config_to_json(const RunConfig& c) {
  json probes = json::array();
  for (const auto& p : c.probes) {
    probes.push_back(p);
  }
  const json doc = {{"command", to_string(c.command)},
                    {"hurst", c.hurst},
                    {"t", c.t},
                    {"s", c.s},
                    {"F", c.F_spec},
                    {"G", c.G_spec},
                    {"base_cells", c.base_cells},
                    {"grading_exponent", c.grading_exponent ? json(*c.grading_exponent) : json(nullptr)},
                    {"gauss_nodes", c.gauss_nodes},
                    {"target_rel_error", c.target_rel_error},
                    {"steps", c.steps},
                    {"n_paths", c.n_paths},
                    {"seed", c.seed},
                    {"generator", to_string(c.generator)},
                    {"compare", c.compare},
                    {"surface_points", c.surface_points},
                    {"probes", probes},
                    {"htilde_grid", c.htilde_grid},
                    {"eps_ladder", c.eps_ladder},
                    {"trace_cells", c.trace_cells},
                    {"trace_samples", c.trace_samples},
                    {"output", c.output},
                    {"format", to_string(c.format)},
                    {"threads", c.threads}};
  return doc.dump();
}

RunConfig read_embedded_config(const std::filesystem::path& artifact) {
  std::ifstream in(artifact);
  if (!in) {
    throw std::runtime_error("cannot open " + artifact.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const json doc = json::parse(text);
    if (!doc.contains("config")) {
      throw ConfigError(artifact.string() + " has no embedded config");
    }
    return config_from_json(doc.at("config").dump());
  }
  std::istringstream lines(text);
  const std::string prefix = "# config ";
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind(prefix, 0) == 0) {
      return config_from_json(line.substr(prefix.size()));
    }
  }
  throw ConfigError(artifact.string() + " has no embedded config");
}

std::optional<std::filesystem::path> ensemble_cache_dir() {
  const char* dir = std::getenv("FBMXCOV_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') {
    return std::nullopt;
  }
  return std::filesystem::path(dir);
}

RunOutcome run(const RunConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    return {1, e.what()};
  }
  try {
    Artifact a;
    try {
      const GFunction F = parse_function_spec(cfg.F_spec);
      const GFunction G = parse_function_spec(cfg.G_spec);
      auto hurst = [&] { return HurstParameter(cfg.hurst); };
      switch (cfg.command) {
        case Command::covar:
          a = run_covar(cfg, F, G, hurst());
          break;
        case Command::surface:
          a = run_surface(cfg, F, G, hurst());
          break;
        case Command::mc:
          a = run_mc(cfg, F, G, hurst());
          break;
        case Command::notfbm:
          a = run_notfbm(cfg, F, G, hurst());
          break;
        case Command::limit:
          a = run_limit(cfg, F, G);
          break;
        case Command::trace_check:
          a = run_trace_check(cfg, hurst());
          break;
        case Command::finiteness:
          a = run_finiteness(cfg, hurst());
          break;
      }
    } catch (const NonConvergenceError& e) {
      a = Artifact{};
      a.converged = false;
      a.message = e.what();
      a.header = kCovarianceHeader;
      a.rows.push_back(covariance_row(cfg.t, cfg.s, e.result()));
      a.result = covariance_json(cfg.t, cfg.s, e.result());
    } catch (const QuadratureError& e) {
      a = Artifact{};
      a.converged = false;
      a.message = e.what();
      a.header = {"estimate", "achieved_error"};
      a.rows.push_back({e.estimate(), e.achieved_error()});
      a.result = {{"estimate", e.estimate()}, {"achieved_error", e.achieved_error()}};
    }
    write_artifact(cfg, a);
    if (!a.converged) {
      return {2, "did not converge: " + a.message};
    }
    return {0, a.message};
  } catch (const std::exception& e) {
    return {1, e.what()};
  }
}

}  // namespace fbmxcov
