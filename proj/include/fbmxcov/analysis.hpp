#pragma once

#include "fbmxcov/fbm_model.hpp"
#include "fbmxcov/gauss_kernels.hpp"
#include "fbmxcov/gclass.hpp"
#include "fbmxcov/numerics.hpp"
#include "fbmxcov/quadrature.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fbmxcov {

// Two points with the same |t - s|.
struct ProbePair {
  double t1, s1;
  double t2, s2;
};

struct ProbeResult {
  ProbePair probe;
  KernelEstimate first;
  KernelEstimate second;
  double rel_discrepancy;  // |first - second| / max(|first|, |second|)
  // The gap exceeds 10x both error estimates (and rounding level).
  bool separated;
};

struct HtildeVerdict {
  double htilde;
  bool refuted;
};

// An fBm with any index Ht and scale c has mixed second covariance derivative
// c alpha_Ht |t - s|^(2 Ht - 2), a function of |t - s| alone. A separated
// probe pair therefore rules out every (c, Ht) at once.
struct NotFbmReport {
  HurstParameter H;
  std::vector<ProbeResult> probes;
  std::vector<HtildeVerdict> verdicts;
  bool not_fbm;
  std::string verdict;    // "not fBm for any H~" or "consistent with fBm(H)"
  std::string reasoning;
};

NotFbmReport not_fbm_test(const GFunction& F, const GFunction& G, const HurstParameter& H,
                          const std::vector<ProbePair>& probes, const std::vector<double>& htilde_grid,
                          const KernelOptions& options = {});

struct LimitStudyOptions {
  QuadratureConfig quadrature = [] {
    QuadratureConfig c;
    c.target_rel_error = 1e-4;
    return c;
  }();
  // Item (ii) probes: off-diagonal midpoints of an n x n grid on the unit square.
  // alpha_H gamma_H is homogeneous of degree 4H - 2, so a larger square only
  // rescales the values by a power that itself depends on H.
  int probe_grid = 16;
  double p_probe_tau = 2.0;
  double p_probe_sigma = 1.0;
};

struct LimitLevel {
  double epsilon;
  CovarianceResult covariance;
  double deviation;           // |value - target|
  double max_alpha_gamma;     // item (ii)
  std::optional<double> p_value;  // item (iii), when P is not identically zero
  std::optional<double> p_rel_deviation;
};

struct LimitStudyReport {
  std::vector<double> epsilons;
  double target;  // integral over [0, min(t, s)] of E F(W_tau) G(W_tau)
  std::vector<LimitLevel> levels;
  double extrapolated;  // polynomial extrapolation of the values to epsilon = 0
  double p_limit = 0.0;
  bool deviations_weakly_decreasing;
  // max alpha gamma ratio between consecutive levels
  std::vector<double> alpha_gamma_ratios;
};

// Ladder of H = 1/2 + epsilon, epsilon in (0, 1/4] strictly decreasing.
LimitStudyReport brownian_limit_study(const GFunction& F, const GFunction& G, double t, double s,
                                      const std::vector<double>& eps_ladder,
                                      const LimitStudyOptions& options = {});

// E F(W) G(W) for W ~ N(0, variance), split at the jumps and ramps so each
// piece is smooth.
double same_time_expectation(const GFunction& F, const GFunction& G, double variance);

// Integral over [0, m] of same_time_expectation(F, G, tau).
double brownian_target(const GFunction& F, const GFunction& G, double m);

// Majorant C (r^-1 v r^-3/2) g(theta) of 1 / (tau^H sigma^H sqrt(1 - rho^2))
// over tau > sigma > 0, tau = r cos(theta), sigma = r sin(theta), with
// g = theta^-a below the split angle and (pi/4 - theta)^-b above it.
struct PolarMajorant {
  double axis_exponent = 3.0 / 8.0;
  double diagonal_exponent = 3.0 / 4.0;
  double split = numerics::kPi / 6.0;
  double radius = 2.0;
};

struct PolarHReport {
  double H;
  double max_ratio;          // sample_count uniform samples
  double max_ratio_doubled;  // 2 * sample_count
  // Ratio along theta = (pi/4) 2^-k, along pi/4 - theta = (pi/4) 2^-k and
  // along r = R 2^-k, for k = 1..kEdgeSteps; growth over the last ten
  // halvings of each sweep.
  double axis_growth;
  double diagonal_growth;
  double origin_growth;
  bool stable;
};

struct PolarReport {
  PolarMajorant majorant;
  std::size_t sample_count;
  std::vector<PolarHReport> per_h;
  bool pass;
};

// Largest ratio lhs / majorant over random and boundary samples, per H. Fails
// when the ratio grows by more than 5% under sample doubling or along a
// boundary sweep.
PolarReport polar_majorant_check(const std::vector<double>& h_grid, std::size_t sample_count,
                                 const PolarMajorant& majorant = {}, std::uint64_t seed = 1);

// 1 / (tau^H sigma^H sqrt(1 - rho^2)); accepts H = 1/2. `gap` is |tau - sigma|
// when known more precisely than the difference.
double polar_lhs(double tau, double sigma, const HurstParameter& H, std::optional<double> gap = std::nullopt);

}  // namespace fbmxcov
