#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace fbmxcov::numerics {

inline constexpr double kPi = 3.14159265358979323846;

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre rule on [-1, 1]. Rules are built once per order and cached.
const QuadratureRule& gauss_legendre(int order);

// Gauss-Hermite rule for the standard normal weight, so that
// sum_i w_i g(z_i) approximates E g(Z). Weights sum to one.
const QuadratureRule& gauss_hermite(int order);

// Composite Gauss-Legendre rule on (0, 1) with optional power grading toward
// either end. A grade q > 1 at the low end means x = v^q near 0, which
// clusters nodes where an integrand behaves like a power of x. When both ends
// are graded the interval is split at 1/2. `complements` holds 1 - x computed
// without cancellation, which matters for nodes close to 1.
struct GradedRule {
  std::vector<double> nodes;
  std::vector<double> complements;
  std::vector<double> weights;
};
GradedRule graded_rule(int cells, int nodes_per_cell, double grade_low, double grade_high);

double normal_pdf(double z);
double normal_cdf(double z);
// Upper tail 1 - Phi(z), accurate for large positive z.
double normal_sf(double z);

// Pairwise summation: error grows like log(n) rather than n, and the result
// depends only on the order of `values`.
double pairwise_sum(std::span<const double> values);

struct IntegrationResult {
  double value = 0.0;
  double abs_error = 0.0;
  bool converged = false;
};

// Adaptive Gauss-Kronrod (7/15) with bisection. Never evaluates f at a or b.
IntegrationResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                     double abs_tol, double rel_tol, int max_depth = 40);

// Integral over the real line via x = u / (1 - u^2).
IntegrationResult integrate_real_line(const std::function<double(double)>& f, double abs_tol,
                                      double rel_tol);

// Integral of phi(w) g(w) over [lower, inf), phi the standard normal density.
double half_line_normal_integral(const std::function<double(double)>& g, double lower,
                                 int hermite_order);

// Runs body(i) for i in [0, n) on up to `threads` worker threads (0 means
// hardware concurrency). The first exception thrown by a worker is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

unsigned resolve_threads(unsigned requested);

}  // namespace fbmxcov::numerics
