#pragma once

#include "fbmxcov/numerics.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbmxcov {

struct Jump {
  double location;
  double size;
};

// size * Psi(scale * (x - location)), where Psi is the distribution function of
// the base bump. This is what a sharp jump becomes after mollification.
struct SmoothedJump {
  double location;
  double size;
  double scale;
};

class MollifierFamily {
 public:
  // phi_1(u) proportional to exp(-1 / (1 - u^2)) on (-1, 1), unit mass.
  static const MollifierFamily& standard();

  double base(double u) const;
  double scaled(double n, double x) const { return n * base(n * x); }
  double base_derivative(double u) const;
  double cdf(double u) const;
  double sup_base() const { return sup_; }
  double normalization() const { return norm_; }

  // Gauss-Legendre nodes on [-1, 1] with weights w_k phi_1(u_k), renormalized to
  // sum to one: sum_k w_k g(u_k) approximates the phi_1-average of g.
  const numerics::QuadratureRule& bump_rule(int order) const;

 private:
  MollifierFamily();
  double norm_;
  double sup_;
  double table_step_;
  std::vector<double> cdf_table_;
};

struct DerivativeMeasure {
  std::function<double(double)> ac_density;
  std::vector<Jump> atoms;
};

class GFunction {
 public:
  using Callable = std::function<double(double)>;

  struct SmoothPart {
    Callable value;
    Callable derivative;
    double derivative_bound = 0.0;
  };

  // The zero function.
  GFunction() = default;
  GFunction(std::optional<SmoothPart> smooth, std::vector<Jump> jumps, double base_value,
            std::string label, std::vector<SmoothedJump> smoothed = {});

  static GFunction constant(double c);
  static GFunction identity();
  static GFunction sign();
  static GFunction tanh();
  static GFunction sine();
  static GFunction steps(std::vector<Jump> jumps, double base_value = 0.0);
  static GFunction smooth(Callable value, Callable derivative, double derivative_bound,
                          std::string label);

  // Right-continuous: jumps at locations <= x are included.
  double operator()(double x) const;
  // Absolutely continuous part: smooth part plus smoothed jumps.
  double ac_value(double x) const;
  double ac_derivative(double x) const;
  double smooth_value(double x) const;
  double smooth_derivative(double x) const;

  // Declared bound on |F_ac'|, including smoothed jumps.
  double derivative_bound() const;
  double smooth_derivative_bound() const { return smooth_ ? smooth_->derivative_bound : 0.0; }

  bool has_smooth_part() const noexcept { return smooth_.has_value(); }
  bool has_ac_part() const noexcept { return smooth_.has_value() || !smoothed_.empty(); }
  std::span<const Jump> jumps() const noexcept { return jumps_; }
  std::span<const SmoothedJump> smoothed_jumps() const noexcept { return smoothed_; }
  double base_value() const noexcept { return base_; }
  const std::string& label() const noexcept { return label_; }
  const std::optional<SmoothPart>& smooth_part() const noexcept { return smooth_; }

  DerivativeMeasure derivative_measure() const;

  friend GFunction operator+(const GFunction& a, const GFunction& b);

 private:
  std::optional<SmoothPart> smooth_;
  std::vector<Jump> jumps_;
  std::vector<SmoothedJump> smoothed_;
  double base_ = 0.0;
  std::string label_ = "0";
};

double evaluate(const GFunction& F, double x);

// Integral of h against the derivative measure of F.
double derivative_pairing(const GFunction& F, const std::function<double(double)>& h);

// A constant M with |F(x)| <= M (1 + |x|) for F and every mollification of F.
double linear_growth_bound(const GFunction& F);

// F * phi_n. Sharp jumps become smoothed jumps, so the result has no atoms.
GFunction mollify(const GFunction& F, int n,
                  const MollifierFamily& family = MollifierFamily::standard());

struct PairingConvergenceReport {
  double limit = 0.0;
  std::vector<int> levels;
  std::vector<double> values;
  std::vector<double> deviations;
  // Largest deviation over all levels but the first.
  double max_tail_deviation = 0.0;
};

PairingConvergenceReport derivative_pairing_converges(
    const GFunction& F, const std::function<double(double)>& h, const std::vector<int>& levels,
    const MollifierFamily& family = MollifierFamily::standard());

}  // namespace fbmxcov
