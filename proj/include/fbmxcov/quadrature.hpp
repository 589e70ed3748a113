#pragma once

#include "fbmxcov/fbm_model.hpp"
#include "fbmxcov/gauss_kernels.hpp"
#include "fbmxcov/gclass.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fbmxcov {

struct QuadratureConfig {
  int base_cells_per_axis = 8;
  // Grading toward the diagonal; derived from H when unset.
  std::optional<double> diagonal_grading_exponent;
  int gauss_nodes_per_cell = 6;
  double target_rel_error = 1e-6;
  KernelOptions kernel{};
  // Worker threads, 0 = hardware concurrency. Results do not depend on it.
  unsigned threads = 0;

  void validate() const;
  double diagonal_exponent(const HurstParameter& H) const;
};

struct CovarianceResult {
  double value = 0.0;
  double isometry_term = 0.0;
  double trace_term = 0.0;
  double est_rel_error = 0.0;
};

// Thrown when one refinement doubling moves the result by more than the target.
// The refined result and the coarse value are both kept.
class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, CovarianceResult result, double coarse_value)
      : std::runtime_error(what), result_(result), coarse_value_(coarse_value) {}
  const CovarianceResult& result() const noexcept { return result_; }
  double coarse_value() const noexcept { return coarse_value_; }

 private:
  CovarianceResult result_;
  double coarse_value_;
};

// One node of the quadrature rule for a double integral over [0,t] x [0,s].
// `gap` is |tau - sigma| computed without cancellation.
struct MeshNode {
  double tau;
  double sigma;
  double gap;
  double weight;
};

// Graded product rule on [0,t] x [0,s]. The square [0,m]^2, m = min(t,s), is
// split along the diagonal and each half is mapped from the unit square so
// that nodes cluster at the origin and at the diagonal. The remaining
// rectangle is split into two triangles at its corner (m,m). No node lies on
// the diagonal or on an axis.
std::vector<MeshNode> covariance_mesh(double t, double s, const HurstParameter& H, int cells,
                                      int nodes_per_cell, double diagonal_exponent);

CovarianceResult cross_covariance(const GFunction& F, const GFunction& G, double t, double s,
                                  const HurstParameter& H, const QuadratureConfig& cfg = {});

// Entry (i, j) is cross_covariance(F, G, t_nodes[i], s_nodes[j]). Kernel values
// are shared between entries that visit the same quadrature nodes.
std::vector<std::vector<CovarianceResult>> covariance_surface(const GFunction& F, const GFunction& G,
                                                              std::span<const double> t_nodes,
                                                              std::span<const double> s_nodes,
                                                              const HurstParameter& H,
                                                              const QuadratureConfig& cfg = {});

// alpha_H [ |tau - sigma|^(2H-2) M + gamma P ], the mixed second derivative of
// the covariance surface.
double integrand_at(const GFunction& F, const GFunction& G, double tau, double sigma,
                    const HurstParameter& H, const KernelOptions& options = {});
KernelEstimate integrand_at_checked(const GFunction& F, const GFunction& G, double tau, double sigma,
                                    const HurstParameter& H, const KernelOptions& options = {});

// Integral over [0,t] x [0,s] of gamma(tau, sigma) times the density of
// (B_tau, B_sigma) at (x, y). Doubles the mesh up to three extra times
// before giving up.
double weighted_density_kernel(double t, double s, const HurstParameter& H, double x, double y,
                               const QuadratureConfig& cfg = {});

struct FinitenessResult {
  double value;
  double coarse_value;
  double rel_change;
};

// Integral over [0,T]^2 of gamma / (tau^H sigma^H sqrt(1 - rho^2)). Throws
// QuadratureError when one doubling changes it by 1% or more.
FinitenessResult finiteness_check(const HurstParameter& H, double T, const QuadratureConfig& cfg = {});

}  // namespace fbmxcov
