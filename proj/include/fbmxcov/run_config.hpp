#pragma once

#include "fbmxcov/quadrature.hpp"
#include "fbmxcov/simulate.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbmxcov {

enum class Command { covar, surface, mc, notfbm, limit, trace_check, finiteness };
enum class Format { csv, json };

std::string to_string(Command c);
Command command_from_string(const std::string& name);
std::string to_string(Format f);
Format format_from_string(const std::string& name);

// Invalid configuration: unknown key, wrong type, value out of range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  Command command = Command::covar;
  double hurst = 0.75;
  double t = 1.0;
  double s = 1.0;
  std::string F_spec = "const:1";
  std::string G_spec = "const:1";

  // quadrature
  int base_cells = 8;
  std::optional<double> grading_exponent;
  int gauss_nodes = 6;
  double target_rel_error = 1e-6;

  // ensemble
  std::size_t steps = 512;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 12345;
  Generator generator = Generator::circulant;
  // mc: also run the quadrature and report |mc - quadrature| against 3 stderr
  bool compare = false;

  // surface: points per axis, nodes at t i / points and s j / points
  int surface_points = 8;
  // notfbm
  std::vector<std::array<double, 4>> probes{{1.0, 0.5, 1.5, 1.0}};
  std::vector<double> htilde_grid{0.55, 0.65, 0.75, 0.85, 0.95};
  // limit
  std::vector<double> eps_ladder{0.1, 0.05, 0.025};
  // trace-check
  std::size_t trace_cells = 32;
  std::size_t trace_samples = 50;

  // Empty output means standard output.
  std::string output;
  Format format = Format::csv;
  unsigned threads = 0;

  void validate() const;
  QuadratureConfig quadrature() const;
};

// Strict: unknown keys and wrong types are ConfigErrors. Missing keys keep
// their defaults. The result is validated.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);

// The config embedded in a CSV or JSON artifact written by run().
RunConfig read_embedded_config(const std::filesystem::path& artifact);

struct RunOutcome {
  int exit_code;  // 0 ok, 1 usage error, 2 numerical non-convergence
  std::string message;
};

// Validates, computes and writes the artifact atomically. Non-convergence
// still writes the best result, flagged, and returns 2.
RunOutcome run(const RunConfig& cfg);

// Directory for cached ensembles, from FBMXCOV_CACHE_DIR; unset means no cache.
std::optional<std::filesystem::path> ensemble_cache_dir();

}  // namespace fbmxcov
