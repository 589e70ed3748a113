#pragma once

#include "fbmxcov/fbm_model.hpp"
#include "fbmxcov/gclass.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbmxcov {

struct Seed {
  std::uint64_t root = 0;
};

// `external` marks ensembles read from a file, which does not record the method.
enum class Generator { cholesky, circulant, external };

std::string to_string(Generator g);
Generator generator_from_string(const std::string& name);

using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PathEnsemble {
  TimeGrid grid;
  HurstParameter H;
  PathMatrix paths;  // n_paths x (cells + 1), column 0 is zero
  Seed seed;
  Generator generator;

  std::size_t n_paths() const { return static_cast<std::size_t>(paths.rows()); }
  std::span<const double> path(std::size_t i) const {
    return {paths.data() + i * static_cast<std::size_t>(paths.cols()), static_cast<std::size_t>(paths.cols())};
  }
};

// Draws fBm paths on a uniform grid one at a time. Path i depends only on
// (seed, i), so ensembles do not depend on how paths are spread over threads.
class PathSampler {
 public:
  virtual ~PathSampler() = default;
  // Writes B at every grid node into `out`, which must hold cells + 1 values.
  virtual void sample(std::size_t path_index, std::span<double> out) const = 0;
  virtual Generator generator() const = 0;
  const TimeGrid& grid() const noexcept { return grid_; }
  const HurstParameter& hurst() const noexcept { return H_; }
  Seed seed() const noexcept { return seed_; }

 protected:
  PathSampler(TimeGrid grid, HurstParameter H, Seed seed);
  TimeGrid grid_;
  HurstParameter H_;
  Seed seed_;
};

// Dense Cholesky factor of the covariance matrix; n <= 4096. Factors are
// cached per (grid, H).
std::unique_ptr<PathSampler> make_cholesky_sampler(const TimeGrid& grid, const HurstParameter& H, Seed seed);
// Circulant embedding of the increment sequence, O(n log n) per path.
std::unique_ptr<PathSampler> make_circulant_sampler(const TimeGrid& grid, const HurstParameter& H, Seed seed);
std::unique_ptr<PathSampler> make_sampler(Generator g, const TimeGrid& grid, const HurstParameter& H, Seed seed);

PathEnsemble generate(const PathSampler& sampler, std::size_t n_paths, unsigned threads = 0);
PathEnsemble generate_cholesky(const TimeGrid& grid, const HurstParameter& H, Seed seed, std::size_t n_paths,
                               unsigned threads = 0);
PathEnsemble generate_circulant(const TimeGrid& grid, const HurstParameter& H, Seed seed, std::size_t n_paths,
                                unsigned threads = 0);

// Left-point sum of F(B_k)(B_k+1 - B_k) over the cells up to the node t.
double young_integral(const GFunction& F, const TimeGrid& grid, std::span<const double> path, double t);

struct DivergenceSample {
  double young_part;
  double correction_part;
  double value;  // young_part - correction_part
};

// Divergence integral of the left-point step process F(B_tk) on [tk, tk+1),
// up to the node t. Its correction is the sum of F'(B_tk) R_H-increments
// (tk+1^2H - tk^2H - (tk+1 - tk)^2H) / 2, which makes it exact for the step
// process and centered for every n. Rejects F with sharp jumps.
DivergenceSample divergence_integral(const GFunction& F, const TimeGrid& grid, std::span<const double> path,
                                     double t, const HurstParameter& H);

struct EnsembleParams {
  std::size_t steps = 512;
  std::size_t n_paths = 100000;
  Seed seed{};
  Generator generator = Generator::circulant;
  // Horizon of the simulation grid; max(t, s) when unset.
  std::optional<double> horizon;
  unsigned threads = 0;
};

struct McEstimate {
  double estimate;
  double std_error;
  std::size_t n_paths;
};

// Sample mean of delta(F)_t delta(G)_s with its standard error. Paths are
// drawn and discarded in blocks, so memory does not grow with n_paths.
McEstimate mc_cross_covariance(const GFunction& F, const GFunction& G, double t, double s,
                               const HurstParameter& H, const EnsembleParams& params);
McEstimate mc_cross_covariance(const GFunction& F, const GFunction& G, double t, double s,
                               const PathEnsemble& ensemble, unsigned threads = 0);

struct MollifiedMcLevel {
  int n;
  McEstimate mc;
};

struct MollifiedMcReport {
  std::vector<MollifiedMcLevel> levels;
  // Richardson in n^-rate from the last two levels, with its own standard
  // error from the same paths.
  McEstimate extrapolated;
  double rate = 0.0;
  // log(gap_k / gap_k+1) / log(n_k+1 / n_k) for successive gaps; needs three levels.
  std::optional<double> observed_order;
};

// Runs the MC estimate for mollify(F, n), mollify(G, n) over `levels` on one
// shared set of paths. The default rate (1 - H) / H is the one at which
// mollified sharp jumps approach their limit: near the diagonal P grows like
// |tau - sigma|^-H and mollifying at width 1/n caps it where
// |tau - sigma|^H ~ 1/n.
MollifiedMcReport mc_mollified(const GFunction& F, const GFunction& G, double t, double s,
                               const HurstParameter& H, const EnsembleParams& params,
                               const std::vector<int>& levels = {8, 32, 128},
                               std::optional<double> rate = std::nullopt);

// The default extrapolation rate of mc_mollified.
double mollification_rate(const HurstParameter& H);

// Binary ensemble file: "FBME", u16 version, f64 H, u32 n, u32 n_paths,
// u64 seed, then the row-major path matrix, all little-endian. The horizon is
// not stored, so the reader takes it as an argument.
void write_ensemble(const std::filesystem::path& file, const PathEnsemble& ensemble);
PathEnsemble read_ensemble(const std::filesystem::path& file, double horizon = 1.0);
// One header row of grid times, then one row per path.
void write_ensemble_csv(const std::filesystem::path& file, const PathEnsemble& ensemble);

}  // namespace fbmxcov
