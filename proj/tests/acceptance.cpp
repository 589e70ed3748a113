// Acceptance run: one PASS/FAIL line per criterion, detail lines indented.
// Exit status is the number of failed criteria.

#include "fbmxcov/analysis.hpp"
#include "fbmxcov/errors.hpp"
#include "fbmxcov/fbm_model.hpp"
#include "fbmxcov/gauss_kernels.hpp"
#include "fbmxcov/hs_operators.hpp"
#include "fbmxcov/quadrature.hpp"
#include "fbmxcov/simulate.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace fbmxcov;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

struct Verdict {
  bool pass;
  std::string summary;
};

const std::vector<double> kHs{0.6, 0.75, 0.9};
const std::vector<std::pair<double, double>> kTs{{1, 1}, {2, 1}, {0.5, 1.5}};

Verdict constant_exactness() {
  bool ok = true;
  double worst = 0, slowest = 0;
  for (double h : kHs) {
    for (auto [t, s] : kTs) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = cross_covariance(GFunction::constant(1), GFunction::constant(1), t, s, HurstParameter(h));
      const double dt = seconds_since(t0);
      const double e = rel(r.value, oracle::rh(t, s, h));
      std::printf("    H=%.2f (t,s)=(%g,%g) value=%.12f rel=%.2e time=%.3fs\n", h, t, s, r.value, e, dt);
      worst = std::max(worst, e), slowest = std::max(slowest, dt);
      ok = ok && e <= 1e-6 && dt < 1.0;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel %.2e (tol 1e-6), max time %.3fs (limit 1s)", worst, slowest);
  return {ok, buf};
}

Verdict identity_oracle() {
  bool ok = true;
  double worst = 0;
  for (double h : kHs) {
    for (auto [t, s] : kTs) {
      const auto t0 = std::chrono::steady_clock::now();
      double value;
      try {
        value = cross_covariance(GFunction::identity(), GFunction::identity(), t, s, HurstParameter(h)).value;
      } catch (const NonConvergenceError& e) {
        value = e.result().value;
        std::printf("    non-converged: %s\n", e.what());
      }
      const double e = rel(value, oracle::id_covariance(t, s, h));
      std::printf("    H=%.2f (t,s)=(%g,%g) value=%.10f oracle=%.10f rel=%.2e time=%.2fs\n", h, t, s, value,
                  oracle::id_covariance(t, s, h), e, seconds_since(t0));
      worst = std::max(worst, e);
      ok = ok && e <= 1e-4;
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max rel %.2e (tol 1e-4)", worst);
  return {ok, buf};
}

Verdict sgn_closed_forms() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> time(0.05, 3.0), hurst(0.51, 0.99);
  const auto t0 = std::chrono::steady_clock::now();
  double worst_m = 0, worst_p = 0, worst_oracle = 0;
  int n = 0;
  while (n < 100) {
    const double tau = time(gen), sigma = time(gen), h = hurst(gen);
    if (std::abs(tau - sigma) < 1e-3) continue;
    ++n;
    const HurstParameter H(h);
    const double mc = m_sgn_closed(tau, sigma, H), pc = p_sgn_closed(tau, sigma, H);
    worst_m = std::max(worst_m, rel(m_kernel(GFunction::sign(), GFunction::sign(), tau, sigma, H), mc));
    worst_p = std::max(worst_p, rel(p_kernel(GFunction::sign(), GFunction::sign(), tau, sigma, H), pc));
    worst_oracle = std::max({worst_oracle, rel(mc, oracle::m_sgn(tau, sigma, h)), rel(pc, oracle::p_sgn(tau, sigma, h))});
  }
  const double dt = seconds_since(t0);
  std::printf("    closed forms vs independent formulas: max rel %.2e\n", worst_oracle);
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel M %.2e, P %.2e (tol 1e-8), time %.2fs (limit 10s)", worst_m, worst_p, dt);
  return {worst_m <= 1e-8 && worst_p <= 1e-8 && worst_oracle <= 1e-8 && dt < 10.0, buf};
}

Verdict mc_headline() {
  struct Case {
    const char* name;
    GFunction F, G;
  };
  const std::vector<Case> cases{{"(sin,tanh)", GFunction::sine(), GFunction::tanh()},
                                {"(id,id)", GFunction::identity(), GFunction::identity()},
                                {"(const 1,sin)", GFunction::constant(1), GFunction::sine()}};
  bool ok = true;
  double worst_z = 0, slowest = 0;
  for (const auto& c : cases) {
    for (double h : {0.6, 0.7}) {
      const HurstParameter H(h);
      const auto t0 = std::chrono::steady_clock::now();
      EnsembleParams p;
      p.steps = 512;
      p.n_paths = 100000;
      p.seed = Seed{20240601};
      const auto mc = mc_cross_covariance(c.F, c.G, 1, 1, H, p);
      const double q = cross_covariance(c.F, c.G, 1, 1, H).value;
      const double dt = seconds_since(t0);
      const double z = std::abs(mc.estimate - q) / mc.std_error;
      const double se_limit = 0.01 * std::abs(q) + 1e-3;
      const bool case_ok = z <= 3.0 && mc.std_error <= se_limit && dt <= 300.0;
      std::printf("    %s H=%.1f mc=%.6f stderr=%.6f quad=%.6f |diff|/stderr=%.2f stderr limit=%.6f time=%.1fs %s\n",
                  c.name, h, mc.estimate, mc.std_error, q, z, se_limit, dt, case_ok ? "ok" : "FAIL");
      worst_z = std::max(worst_z, z), slowest = std::max(slowest, dt);
      ok = ok && case_ok;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "max |mc - quad|/stderr %.2f (tol 3), stderr <= 0.01|v|+1e-3, max time %.1fs (limit 300s)",
                worst_z, slowest);
  return {ok, buf};
}

Verdict mollified_mc() {
  const HurstParameter H(0.75);
  const auto t0 = std::chrono::steady_clock::now();
  EnsembleParams p;
  p.seed = Seed{20240602};
  const auto r = mc_mollified(GFunction::sign(), GFunction::sign(), 1, 1, H, p);
  const double q = cross_covariance(GFunction::sign(), GFunction::sign(), 1, 1, H).value;
  const double dt = seconds_since(t0);
  for (const auto& l : r.levels) std::printf("    n=%d mc=%.6f stderr=%.6f\n", l.n, l.mc.estimate, l.mc.std_error);
  const double tol = std::max(0.02 * std::abs(q), 3 * r.extrapolated.std_error);
  const double diff = std::abs(r.extrapolated.estimate - q);
  std::printf("    extrapolated=%.6f stderr=%.6f rate=%.4f observed order=%s quadrature=%.6f\n", r.extrapolated.estimate,
              r.extrapolated.std_error, r.rate,
              r.observed_order ? std::to_string(*r.observed_order).c_str() : "n/a", q);
  char buf[160];
  std::snprintf(buf, sizeof buf, "|extrapolated - quad| %.4f (tol %.4f), time %.1fs (limit 600s)", diff, tol, dt);
  return {diff <= tol && dt <= 600.0, buf};
}

Verdict trace_oracle() {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const HurstParameter H(0.7);
  double worst = 0;
  for (std::size_t n : {32u, 64u}) {
    const auto g = TimeGrid::uniform(1.0, n);
    for (int k = 0; k < 50; ++k) {
      auto draw = [&] {
        Eigen::MatrixXd m(n, n);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
        return KernelOperator(g, m, 1.0);
      };
      const auto k1 = draw(), k2 = draw();
      worst = std::max(worst, rel(trace(compose(k1, k2, H), H), gram_trace_oracle(k1, k2, H)));
    }
  }
  std::printf("    random kernels, n=32 and 64: max rel %.2e\n", worst);

  // per-path identity: trace of the composed Malliavin kernels against
  // alpha_H * double integral of gamma F'(B) G'(B), both on the same path
  const auto F = GFunction::sine();
  const auto G = GFunction::tanh();
  const auto fine = TimeGrid::uniform(1.0, 256);
  const auto sampler = make_circulant_sampler(fine, H, Seed{99});
  std::vector<double> path(257);
  bool decreasing = true;
  for (std::size_t p = 0; p < 3; ++p) {
    sampler->sample(p, path);
    double prev = 1e300;
    std::printf("    path %zu deviations:", p);
    for (std::size_t n : {16u, 32u, 64u, 128u}) {
      const auto g = TimeGrid::uniform(1.0, n);
      std::vector<double> coarse(n + 1);
      for (std::size_t i = 0; i <= n; ++i) coarse[i] = path[i * (256 / n)];
      const double lhs = trace(compose(malliavin_kernel(F, g, coarse, 1.0), malliavin_kernel(G, g, coarse, 0.5), H), H);
      std::vector<double> fd(n), gd(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double b = 0.5 * (coarse[i] + coarse[i + 1]);
        fd[i] = F.ac_derivative(b);
        gd[i] = G.ac_derivative(b);
      }
      const double dev = std::abs(lhs - oracle::gamma_trace(fd, gd, 1.0, n, n / 2, H.value()));
      std::printf(" %.3e", dev);
      decreasing = decreasing && dev < prev;
      prev = dev;
    }
    std::printf("\n");
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel %.2e (tol 1e-8); per-path deviation decreasing: %s", worst,
                decreasing ? "yes" : "no");
  return {worst <= 1e-8 && decreasing, buf};
}

Verdict gamma_factorization() {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> time(0.01, 5.0), hurst(0.51, 0.99);
  double worst = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < 1000; ++k) {
    const double tau = time(gen), sigma = time(gen);
    const HurstParameter H(hurst(gen));
    const auto f = gamma_factorization_terms(tau, sigma, H);
    const double a = alpha_h(H);
    worst = std::max(worst, rel(a * a * f.i1 * f.i2, a * gamma_kernel(tau, sigma, H)));
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "max rel %.2e over 1000 samples (tol 1e-10), time %.3fs", worst, seconds_since(t0));
  return {worst <= 1e-10, buf};
}

Verdict not_fbm() {
  const HurstParameter H(0.75);
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = integrand_at_checked(GFunction::sign(), GFunction::sign(), 1.0, 0.5, H);
  const auto b = integrand_at_checked(GFunction::sign(), GFunction::sign(), 1.5, 1.0, H);
  const auto r = not_fbm_test(GFunction::sign(), GFunction::sign(), H, {{1.0, 0.5, 1.5, 1.0}},
                              {0.55, 0.65, 0.75, 0.85, 0.95});
  const double dt = seconds_since(t0);
  const double diff = std::abs(a.value - b.value);
  const double gap = diff / std::max(std::abs(a.value), std::abs(b.value));
  const double err = std::max(a.error_estimate, b.error_estimate);
  std::printf("    integrand (1,0.5)=%.6f err=%.1e, (1.5,1)=%.6f err=%.1e\n", a.value, a.error_estimate, b.value,
              b.error_estimate);
  std::printf("    verdict: %s\n", r.verdict.c_str());
  char buf[160];
  std::snprintf(buf, sizeof buf, "rel gap %.2f%% (need > 5%%), error estimates %.1e (need <= gap/10), time %.3fs", 100 * gap,
                err, dt);
  return {gap > 0.05 && 10 * err <= diff && r.verdict == "not fBm for any H~" && dt < 1.0, buf};
}

Verdict brownian_limit() {
  struct Case {
    const char* name;
    GFunction F, G;
  };
  const std::vector<Case> cases{{"const", GFunction::constant(1), GFunction::constant(1)},
                                {"id", GFunction::identity(), GFunction::identity()},
                                {"sgn", GFunction::sign(), GFunction::sign()}};
  bool dev_ok = true, extrap_ok = true, ratio_ok = true, p_ok = true;
  double min_ratio = 1e300, worst_extrap = 0, worst_p = 0;
  for (const auto& c : cases) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = brownian_limit_study(c.F, c.G, 2, 1, {0.1, 0.05, 0.025});
    const double e = rel(r.extrapolated, r.target);
    std::printf("    %s: target=%.6f extrapolated=%.6f rel=%.2e deviations:", c.name, r.target, r.extrapolated, e);
    for (const auto& l : r.levels) std::printf(" %.3e", l.deviation);
    std::printf(" alpha-gamma ratios:");
    for (double q : r.alpha_gamma_ratios) std::printf(" %.3f", q), min_ratio = std::min(min_ratio, q);
    const auto& last = r.levels.back();
    if (last.p_rel_deviation) {
      std::printf(" P=%.6f limit=%.6f rel=%.2e", *last.p_value, r.p_limit, *last.p_rel_deviation);
      worst_p = std::max(worst_p, *last.p_rel_deviation);
      p_ok = p_ok && *last.p_rel_deviation <= 0.01;
    }
    std::printf(" time=%.1fs\n", seconds_since(t0));
    dev_ok = dev_ok && r.deviations_weakly_decreasing;
    extrap_ok = extrap_ok && e <= 0.02;
    worst_extrap = std::max(worst_extrap, e);
    for (double q : r.alpha_gamma_ratios) ratio_ok = ratio_ok && q >= 2.0;
  }
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "deviations decreasing %s, extrapolation rel %.2e (tol 2%%), min alpha-gamma ratio %.3f (need >= 2), "
                "P rel %.2e (tol 1%%)",
                dev_ok ? "yes" : "no", worst_extrap, min_ratio, worst_p);
  return {dev_ok && extrap_ok && ratio_ok && p_ok, buf};
}

Verdict finiteness() {
  bool ok = true;
  double worst_change = 0, worst_scale = 0;
  for (double h : {0.6, 0.75}) {
    const HurstParameter H(h);
    const auto one = finiteness_check(H, 1.0);
    const auto two = finiteness_check(H, 2.0);
    const double scale = rel(two.value, std::pow(2.0, 2 * h) * one.value);
    std::printf("    H=%.2f value(1)=%.6f change=%.2e value(2)/2^2H=%.6f scaling rel=%.2e\n", h, one.value, one.rel_change,
                two.value / std::pow(2.0, 2 * h), scale);
    worst_change = std::max(worst_change, one.rel_change);
    worst_scale = std::max(worst_scale, scale);
    ok = ok && one.rel_change < 0.01 && scale <= 0.01;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "max refinement change %.2e (tol 1%%), max scaling rel %.2e (tol 1%%)", worst_change,
                worst_scale);
  return {ok, buf};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"constant-coefficient exactness", constant_exactness},
      {"identity-coefficient oracle", identity_oracle},
      {"sgn closed-form agreement", sgn_closed_forms},
      {"MC vs quadrature", mc_headline},
      {"mollified sgn MC", mollified_mc},
      {"trace oracle", trace_oracle},
      {"gamma factorization", gamma_factorization},
      {"not-fBm diagnostic", not_fbm},
      {"Brownian limit", brownian_limit},
      {"finiteness", finiteness},
  };
  // optional list of criterion numbers to run
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k >= 1 && k <= static_cast<int>(criteria.size())) selected[k - 1] = true;
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s C%zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.summary.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed;
}
