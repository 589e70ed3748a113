#include "fbmxcov/analysis.hpp"

#include "fbmxcov/errors.hpp"
#include "fbmxcov/numerics.hpp"
#include "fbmxcov/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fbmxcov {

namespace {

constexpr double kSeparation = 10.0;
constexpr double kRoundingRel = 1e-10;
constexpr int kEdgeSteps = 40;
constexpr double kStableGrowth = 1.05;

double gap_of(double t, double s) { return std::abs(t - s); }

// Neville's scheme evaluated at x = 0.
double extrapolate_to_zero(std::vector<double> xs, std::vector<double> ys) {
  const std::size_t n = xs.size();
  for (std::size_t m = 1; m < n; ++m) {
    for (std::size_t i = 0; i + m < n; ++i) {
      ys[i] = (xs[i + m] * ys[i] - xs[i] * ys[i + 1]) / (xs[i + m] - xs[i]);
    }
  }
  return ys[0];
}

double max_alpha_gamma(const HurstParameter& H, int n) {
  const double alpha = alpha_h(H);
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        continue;
      }
      const double tau = (i + 0.5) / n;
      const double sigma = (j + 0.5) / n;
      best = std::max(best, alpha * gamma_kernel(tau, sigma, H));
    }
  }
  return best;
}

bool is_sign(const GFunction& F) { return F.label() == "sgn"; }

}  // namespace

NotFbmReport not_fbm_test(const GFunction& F, const GFunction& G, const HurstParameter& H,
                          const std::vector<ProbePair>& probes, const std::vector<double>& htilde_grid,
                          const KernelOptions& options) {
  if (probes.empty()) {
    throw std::invalid_argument("not_fbm_test needs at least one probe pair");
  }
  NotFbmReport report{H, {}, {}, false, "", ""};
  bool any_separated = false;
  for (const auto& p : probes) {
    if (p.t1 == p.s1 || p.t2 == p.s2) {
      throw SingularPointError("not_fbm_test: probe on the diagonal");
    }
    const double g1 = gap_of(p.t1, p.s1);
    const double g2 = gap_of(p.t2, p.s2);
    if (std::abs(g1 - g2) > 1e-12 * std::max(g1, g2)) {
      throw std::invalid_argument("not_fbm_test: probe points must have equal |t - s|");
    }
    ProbeResult r{p, integrand_at_checked(F, G, p.t1, p.s1, H, options),
                  integrand_at_checked(F, G, p.t2, p.s2, H, options), 0.0, false};
    const double diff = std::abs(r.first.value - r.second.value);
    const double scale = std::max(std::abs(r.first.value), std::abs(r.second.value));
    r.rel_discrepancy = scale > 0.0 ? diff / scale : 0.0;
    r.separated = diff > kSeparation * r.first.error_estimate && diff > kSeparation * r.second.error_estimate &&
                  diff > kRoundingRel * scale;
    any_separated = any_separated || r.separated;
    report.probes.push_back(r);
  }
  for (double h : htilde_grid) {
    report.verdicts.push_back({h, any_separated});
  }
  report.not_fbm = any_separated;
  std::ostringstream why;
  why.precision(10);
  if (any_separated) {
    report.verdict = "not fBm for any H~";
    why << "The mixed derivative d2/dtds of the covariance differs at points with equal |t - s|";
    for (const auto& r : report.probes) {
      if (r.separated) {
        why << ": " << r.first.value << " at (" << r.probe.t1 << "," << r.probe.s1 << ") vs "
            << r.second.value << " at (" << r.probe.t2 << "," << r.probe.s2 << "), relative gap "
            << r.rel_discrepancy;
        break;
      }
    }
    why << ". Every c R_H~ has mixed derivative c alpha_H~ |t - s|^(2H~ - 2), which depends on |t - s| "
           "only, so no centered self-similar Gaussian candidate fits.";
  } else {
    report.verdict = "consistent with fBm(" + std::to_string(H.value()) + ")";
    why << "At every probe the mixed derivative agrees at equal |t - s| within 10x its error estimate.";
  }
  report.reasoning = why.str();
  return report;
}

double same_time_expectation(const GFunction& F, const GFunction& G, double variance) {
  if (!(variance > 0.0)) {
    throw std::domain_error("same_time_expectation: variance must be positive");
  }
  const double sd = std::sqrt(variance);
  constexpr double kReach = 9.0;
  std::vector<double> cuts{-kReach, kReach};
  auto add = [&](double x) {
    const double z = x / sd;
    if (z > -kReach && z < kReach) {
      cuts.push_back(z);
    }
  };
  for (const GFunction* f : {&F, &G}) {
    for (const auto& j : f->jumps()) {
      add(j.location);
    }
    for (const auto& r : f->smoothed_jumps()) {
      add(r.location - 1.0 / r.scale);
      add(r.location);
      add(r.location + 1.0 / r.scale);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  auto integrand = [&](double z) { return numerics::normal_pdf(z) * F(sd * z) * G(sd * z); };
  std::vector<double> pieces;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const auto r = numerics::integrate_adaptive(integrand, cuts[i], cuts[i + 1], 1e-14, 1e-12);
    if (!r.converged) {
      throw QuadratureError("same_time_expectation did not converge", r.value, r.abs_error);
    }
    pieces.push_back(r.value);
  }
  return numerics::pairwise_sum(pieces);
}

double brownian_target(const GFunction& F, const GFunction& G, double m) {
  if (!(m > 0.0)) {
    throw std::domain_error("brownian_target: horizon must be positive");
  }
  // tau = m v^2 removes the square-root behaviour at tau = 0.
  const auto r = numerics::integrate_adaptive(
      [&](double v) { return 2.0 * m * v * same_time_expectation(F, G, m * v * v); }, 0.0, 1.0, 1e-12, 1e-10);
  if (!r.converged) {
    throw QuadratureError("brownian_target did not converge", r.value, r.abs_error);
  }
  return r.value;
}

LimitStudyReport brownian_limit_study(const GFunction& F, const GFunction& G, double t, double s,
                                      const std::vector<double>& eps_ladder,
                                      const LimitStudyOptions& options) {
  if (eps_ladder.empty()) {
    throw std::invalid_argument("brownian_limit_study: empty epsilon ladder");
  }
  for (std::size_t i = 0; i < eps_ladder.size(); ++i) {
    const double e = eps_ladder[i];
    if (!(e > 0.0 && e <= 0.25)) {
      throw std::invalid_argument("brownian_limit_study: epsilon must lie in (0, 1/4]");
    }
    if (i > 0 && !(e < eps_ladder[i - 1])) {
      throw std::invalid_argument("brownian_limit_study: epsilon ladder must decrease");
    }
  }
  LimitStudyReport report;
  report.epsilons = eps_ladder;
  report.target = brownian_target(F, G, std::min(t, s));
  const KernelEvaluator ev(F, G);
  const bool has_p = !ev.p_is_zero();
  const double pt = options.p_probe_tau;
  const double ps = options.p_probe_sigma;
  if (has_p) {
    if (is_sign(F) && is_sign(G)) {
      report.p_limit = p_limit_brownian(pt, ps);
    } else {
      report.p_limit = ev.p(BivariateGaussianSpec::from_times(pt, ps, HurstParameter::limit_study(0.5)), 1);
    }
  }
  report.levels.resize(eps_ladder.size());
  // Levels are independent; each quadrature parallelizes internally.
  for (std::size_t i = 0; i < eps_ladder.size(); ++i) {
    const HurstParameter H(0.5 + eps_ladder[i]);
    LimitLevel& l = report.levels[i];
    l.epsilon = eps_ladder[i];
    l.covariance = cross_covariance(F, G, t, s, H, options.quadrature);
    l.deviation = std::abs(l.covariance.value - report.target);
    l.max_alpha_gamma = max_alpha_gamma(H, options.probe_grid);
    if (has_p) {
      const auto est = ev.p_checked(BivariateGaussianSpec::from_times(pt, ps, H));
      l.p_value = est.value;
      l.p_rel_deviation = std::abs(est.value - report.p_limit) / std::abs(report.p_limit);
    }
  }
  std::vector<double> xs, ys;
  for (const auto& l : report.levels) {
    xs.push_back(l.epsilon);
    ys.push_back(l.covariance.value);
  }
  report.extrapolated = extrapolate_to_zero(xs, ys);
  report.deviations_weakly_decreasing = true;
  for (std::size_t i = 1; i < report.levels.size(); ++i) {
    const auto& a = report.levels[i - 1];
    const auto& b = report.levels[i];
    // Deviations within the quadrature error of each other count as equal.
    const double slack = 3.0 * (a.covariance.est_rel_error * std::abs(a.covariance.value) +
                                b.covariance.est_rel_error * std::abs(b.covariance.value)) +
                         1e-12 * std::max(1.0, std::abs(report.target));
    if (b.deviation > a.deviation + slack) {
      report.deviations_weakly_decreasing = false;
    }
    report.alpha_gamma_ratios.push_back(a.max_alpha_gamma / b.max_alpha_gamma);
  }
  return report;
}

double polar_lhs(double tau, double sigma, const HurstParameter& H, std::optional<double> gap) {
  const double h = H.value();
  return 1.0 / (std::pow(tau, h) * std::pow(sigma, h) * std::sqrt(one_minus_rho_squared(tau, sigma, H, gap)));
}

namespace {

// `rest` is pi/4 - theta, passed separately so it keeps its precision near
// the diagonal.
double majorant(double r, double theta, double rest, const PolarMajorant& m) {
  const double radial = std::max(1.0 / r, std::pow(r, -1.5));
  const double angular =
      theta < m.split ? std::pow(theta, -m.axis_exponent) : std::pow(rest, -m.diagonal_exponent);
  return radial * angular;
}

double ratio_at(double r, double theta, double rest, const HurstParameter& H, const PolarMajorant& m) {
  const double tau = r * std::cos(theta);
  const double sigma = r * std::sin(theta);
  // cos(theta) - sin(theta) = sqrt(2) sin(pi/4 - theta)
  const double gap = r * std::sqrt(2.0) * std::sin(rest);
  return polar_lhs(tau, sigma, H, gap) / majorant(r, theta, rest, m);
}

double random_max(const HurstParameter& H, const PolarMajorant& m, std::size_t n, std::uint64_t seed) {
  rng::PhiloxStream stream(seed, 0);
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = m.radius * stream.next_uniform();
    const double u = stream.next_uniform();
    best = std::max(best, ratio_at(r, numerics::kPi / 4.0 * u, numerics::kPi / 4.0 * (1.0 - u), H, m));
  }
  return best;
}

// Largest ratio over the last ten points of a sweep divided by the largest
// over the ten before them.
double sweep_growth(const std::vector<double>& v) {
  const std::size_t n = v.size();
  const double late = *std::max_element(v.end() - 10, v.end());
  const double early = *std::max_element(v.begin() + static_cast<long>(n) - 20, v.end() - 10);
  return late / early;
}

}  // namespace

PolarReport polar_majorant_check(const std::vector<double>& h_grid, std::size_t sample_count,
                                 const PolarMajorant& m, std::uint64_t seed) {
  if (sample_count == 0) {
    throw std::invalid_argument("polar_majorant_check: sample_count must be positive");
  }
  PolarReport report{m, sample_count, {}, true};
  const double quarter = numerics::kPi / 4.0;
  for (double h : h_grid) {
    if (!(h >= 0.5 && h <= 0.75)) {
      throw std::invalid_argument("polar_majorant_check: H must lie in [1/2, 3/4]");
    }
    const HurstParameter H = HurstParameter::limit_study(h);
    PolarHReport r{};
    r.H = h;
    // The doubled run reuses the first sample_count draws.
    r.max_ratio = random_max(H, m, sample_count, seed);
    r.max_ratio_doubled = random_max(H, m, 2 * sample_count, seed);
    std::vector<double> axis, diag, origin;
    for (int k = 1; k <= kEdgeSteps; ++k) {
      const double e = quarter * std::ldexp(1.0, -k);
      axis.push_back(ratio_at(1.0, e, quarter - e, H, m));
      diag.push_back(ratio_at(1.0, quarter - e, e, H, m));
      origin.push_back(ratio_at(m.radius * std::ldexp(1.0, -k), quarter / 2.0, quarter / 2.0, H, m));
    }
    r.axis_growth = sweep_growth(axis);
    r.diagonal_growth = sweep_growth(diag);
    r.origin_growth = sweep_growth(origin);
    r.stable = std::isfinite(r.max_ratio_doubled) && r.max_ratio_doubled <= kStableGrowth * r.max_ratio &&
               r.axis_growth <= kStableGrowth && r.diagonal_growth <= kStableGrowth &&
               r.origin_growth <= kStableGrowth;
    report.pass = report.pass && r.stable;
    report.per_h.push_back(r);
  }
  return report;
}

}  // namespace fbmxcov
