#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace fbmxcov {

class HurstParameter {
 public:
  // Accepts 1/2 < h < 1 only.
  explicit HurstParameter(double h);
  // Also accepts h == 1/2, for Brownian-limit studies.
  static HurstParameter limit_study(double h);

  double value() const noexcept { return h_; }
  double two_h() const noexcept { return 2.0 * h_; }
  double two_h_minus_one() const noexcept { return 2.0 * h_ - 1.0; }
  double two_h_minus_two() const noexcept { return 2.0 * h_ - 2.0; }
  bool is_brownian() const noexcept { return h_ == 0.5; }

  friend bool operator==(const HurstParameter& a, const HurstParameter& b) { return a.h_ == b.h_; }

 private:
  struct Unchecked {};
  HurstParameter(double h, Unchecked) : h_(h) {}
  double h_;
};

// alpha_H = H (2H - 1)
double alpha_h(const HurstParameter& H);

// R_H(t, s) = (t^2H + s^2H - |t - s|^2H) / 2
double covariance_rh(double t, double s, const HurstParameter& H);

double correlation_rho(double tau, double sigma, const HurstParameter& H);

// 1 - rho^2 without cancellation near the diagonal. `gap` is |tau - sigma|;
// pass it when it is known more accurately than the difference of the times.
double one_minus_rho_squared(double tau, double sigma, const HurstParameter& H,
                             std::optional<double> gap = std::nullopt);

// Covariance of B_small and the increment B_big - B_small, computed stably.
double increment_covariance(double small, double gap, const HurstParameter& H);

double gamma_kernel(double tau, double sigma, const HurstParameter& H,
                    std::optional<double> gap = std::nullopt);

struct GammaFactors {
  double i1;  // integral over [0, tau] of |u - sigma|^(2H-2) du
  double i2;  // integral over [0, sigma] of |v - tau|^(2H-2) dv
};
GammaFactors gamma_factorization_terms(double tau, double sigma, const HurstParameter& H);

class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> nodes);
  static TimeGrid uniform(double horizon, std::size_t cells);

  std::span<const double> nodes() const noexcept { return nodes_; }
  std::size_t cells() const noexcept { return nodes_.size() - 1; }
  double horizon() const noexcept { return nodes_.back(); }
  double node(std::size_t i) const { return nodes_.at(i); }
  double width(std::size_t cell) const { return nodes_[cell + 1] - nodes_[cell]; }
  // Index of the node equal to t within a relative tolerance, if any.
  std::optional<std::size_t> node_index(double t, double rel_tol = 1e-9) const;
  bool is_uniform(double rel_tol = 1e-12) const;

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) { return a.nodes_ == b.nodes_; }

 private:
  std::vector<double> nodes_;
};

// Piecewise-constant function on the cells of a grid.
class GridFunction {
 public:
  GridFunction(TimeGrid grid, std::vector<double> cell_values);
  // Cell averages of the indicator of [a, b].
  static GridFunction indicator(const TimeGrid& grid, double a, double b);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  GridFunction abs() const;

 private:
  TimeGrid grid_;
  std::vector<double> values_;
};

// alpha_H times the integral of |x - y|^(2H-2) over [a0, a1] x [b0, b1].
double cell_pair_weight(double a0, double a1, double b0, double b1, const HurstParameter& H);

// Matrix of cell_pair_weight over all pairs of grid cells.
Eigen::MatrixXd cell_gram_matrix(const TimeGrid& grid, const HurstParameter& H);

// <f, g> = alpha_H * double integral of f(x) g(y) |x - y|^(2H-2).
double weighted_inner_product(const GridFunction& f, const GridFunction& g, const HurstParameter& H);

// Norm in the absolute-value weighted space: sqrt(<|f|, |f|>).
double abs_h_norm(const GridFunction& f, const HurstParameter& H);

}  // namespace fbmxcov
