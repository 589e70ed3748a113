#pragma once

#include "fbmxcov/fbm_model.hpp"
#include "fbmxcov/gclass.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace fbmxcov {

struct BivariateGaussianSpec {
  double sd_x = 1.0;
  double sd_y = 1.0;
  double rho = 0.0;
  // 1 - rho^2, carried separately so it keeps full relative precision near rho = 1.
  double one_minus_rho2 = 1.0;

  static BivariateGaussianSpec make(double sd_x, double sd_y, double rho);
  // Law of (B_tau, B_sigma). `gap` is |tau - sigma| when known more precisely.
  static BivariateGaussianSpec from_times(double tau, double sigma, const HurstParameter& H,
                                          std::optional<double> gap = std::nullopt);

  double rho_complement() const;
  bool degenerate() const { return one_minus_rho2 <= 0.0; }
};

double density_at(const BivariateGaussianSpec& spec, double x, double y);

// P(X > a, Y > b) for a standard bivariate normal pair with correlation rho.
double bvn_upper_quadrant(double a, double b, double rho);
double bvn_upper_quadrant(double a, double b, double rho, double one_minus_rho2);

// E[phi_n(mu + s Z - a)] for standard normal Z, phi_n the scaled base bump.
double bump_gauss_expectation(double mu, double s, double a, double n, int order);

struct KernelOptions {
  int hermite_order = 64;
  int bump_order = 48;
  // Re-evaluate at doubled orders and fail if the two disagree by more than
  // tolerance * max(1, |value|).
  bool verify = true;
  double tolerance = 1e-9;
};

struct KernelEstimate {
  double value;
  double error_estimate;
};

// Evaluates M and P for a fixed pair (F, G) on arbitrary Gaussian laws.
// Level 0 uses the configured orders, level k multiplies them by 2^k, k < 4.
class KernelEvaluator {
 public:
  KernelEvaluator(GFunction F, GFunction G, KernelOptions options = {});

  double m(const BivariateGaussianSpec& spec, int level = 0) const;
  double p(const BivariateGaussianSpec& spec, int level = 0) const;
  // Raise the level until two successive values agree within the tolerance.
  KernelEstimate m_checked(const BivariateGaussianSpec& spec) const;
  KernelEstimate p_checked(const BivariateGaussianSpec& spec) const;

  const GFunction& f() const noexcept { return F_; }
  const GFunction& g() const noexcept { return G_; }
  const KernelOptions& options() const noexcept { return options_; }
  // True when P vanishes identically (one derivative measure is zero).
  bool p_is_zero() const noexcept;
  // True when M has no smooth-smooth or smooth-step part, so it is exact up to bvn accuracy.
  bool has_atoms_on_both_sides() const noexcept;

 private:
  void check_level(int level) const;
  KernelEstimate escalate(const std::function<double(int)>& at_level) const;

  GFunction F_;
  GFunction G_;
  KernelOptions options_;
};

double m_kernel(const GFunction& F, const GFunction& G, double tau, double sigma,
                const HurstParameter& H, const KernelOptions& options = {});
double p_kernel(const GFunction& F, const GFunction& G, double tau, double sigma,
                const HurstParameter& H, const KernelOptions& options = {});

double m_sgn_closed(double tau, double sigma, const HurstParameter& H);
double p_sgn_closed(double tau, double sigma, const HurstParameter& H);
double p_limit_brownian(double tau, double sigma);

}  // namespace fbmxcov
