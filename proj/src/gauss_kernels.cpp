#include "fbmxcov/gauss_kernels.hpp"

#include "fbmxcov/errors.hpp"
#include "fbmxcov/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fbmxcov {

using numerics::kPi;
using numerics::normal_pdf;
using numerics::normal_sf;

namespace {

constexpr int kLevels = 4;
// Normal mass beyond this many sds is below double precision.
constexpr double kSupportSds = 8.5;

// 20-point Gauss-Legendre half rule used by the quadrant probability.
constexpr double kBvnX[10] = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                              -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                              -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                              -0.07652652113349733};
constexpr double kBvnW[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                              0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                              0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                              0.1527533871307259};

double gh_mean(const std::function<double(double)>& f, double mean, double sd, int order) {
  if (sd == 0.0) {
    return f(mean);
  }
  const auto& gh = numerics::gauss_hermite(order);
  double s = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    s += gh.weights[i] * f(mean + sd * gh.nodes[i]);
  }
  return s;
}

// E[f(su * U) 1{V > beta}] for standard normals U, V with correlation rho.
double smooth_step(const std::function<double(double)>& f, double su, double beta, double rho,
                   double c, int order) {
  if (c >= 0.5) {
    const auto& gh = numerics::gauss_hermite(order);
    double s = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      const double z = gh.nodes[i];
      s += gh.weights[i] * f(su * z) * normal_sf((beta - rho * z) / c);
    }
    return s;
  }
  // Condition on V instead; the conditional law of U is N(rho w, c^2).
  return numerics::half_line_normal_integral(
      [&](double w) { return gh_mean(f, su * rho * w, su * c, order); }, beta, order);
}

// Quadrature for the integral of phi_n(x - a) h(x) over the part of the ramp
// where a centered normal with sd `sd` has mass. `below` is the bump mass to
// the left of that window, where x sits far below the normal's support.
struct RampNodes {
  std::vector<double> x;
  std::vector<double> w;
  double below = 0.0;
};

RampNodes ramp_nodes(const SmoothedJump& r, double sd, int order) {
  const auto& family = MollifierFamily::standard();
  RampNodes out;
  const double reach = kSupportSds * sd;
  const double ulo = std::clamp(r.scale * (-reach - r.location), -1.0, 1.0);
  const double uhi = std::clamp(r.scale * (reach - r.location), -1.0, 1.0);
  out.below = family.cdf(ulo);
  if (!(uhi > ulo)) {
    return out;
  }
  if (ulo == -1.0 && uhi == 1.0) {
    const auto& rule = family.bump_rule(order);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      out.x.push_back(r.location + rule.nodes[k] / r.scale);
      out.w.push_back(rule.weights[k]);
    }
    return out;
  }
  const auto& gl = numerics::gauss_legendre(order);
  const double half = 0.5 * (uhi - ulo);
  for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
    const double u = ulo + half * (gl.nodes[k] + 1.0);
    out.x.push_back(r.location + u / r.scale);
    out.w.push_back(gl.weights[k] * half * family.base(u));
  }
  return out;
}

// Jumps and ramps of F as steps, for an argument distributed N(0, sd^2).
// Ramp mass below the window always fires and is returned as a constant.
struct StepExpansion {
  std::vector<Jump> steps;
  double constant = 0.0;
};

StepExpansion expand_steps(const GFunction& F, double sd, int order) {
  StepExpansion e;
  e.steps.assign(F.jumps().begin(), F.jumps().end());
  for (const auto& r : F.smoothed_jumps()) {
    const RampNodes nodes = ramp_nodes(r, sd, order);
    e.constant += r.size * nodes.below;
    for (std::size_t k = 0; k < nodes.x.size(); ++k) {
      e.steps.push_back({nodes.x[k], r.size * nodes.w[k]});
    }
  }
  return e;
}

}  // namespace

BivariateGaussianSpec BivariateGaussianSpec::make(double sd_x, double sd_y, double rho) {
  if (!(sd_x > 0.0) || !(sd_y > 0.0)) {
    throw std::domain_error("BivariateGaussianSpec: standard deviations must be positive");
  }
  if (!(std::abs(rho) <= 1.0)) {
    throw std::domain_error("BivariateGaussianSpec: |rho| must not exceed 1");
  }
  return {sd_x, sd_y, rho, (1.0 - rho) * (1.0 + rho)};
}

BivariateGaussianSpec BivariateGaussianSpec::from_times(double tau, double sigma,
                                                        const HurstParameter& H,
                                                        std::optional<double> gap) {
  BivariateGaussianSpec spec = make(std::pow(tau, H.value()), std::pow(sigma, H.value()),
                                    correlation_rho(tau, sigma, H));
  spec.one_minus_rho2 = one_minus_rho_squared(tau, sigma, H, gap);
  if (spec.one_minus_rho2 == 0.0) {
    spec.rho = 1.0;
  }
  return spec;
}

double BivariateGaussianSpec::rho_complement() const { return std::sqrt(std::max(0.0, one_minus_rho2)); }

double density_at(const BivariateGaussianSpec& spec, double x, double y) {
  if (spec.degenerate()) {
    throw SingularPointError("density_at: degenerate Gaussian law (|rho| = 1)");
  }
  const double u = x / spec.sd_x;
  const double v = y / spec.sd_y;
  const double q = (u * u - 2.0 * spec.rho * u * v + v * v) / spec.one_minus_rho2;
  return std::exp(-0.5 * q) / (2.0 * kPi * spec.sd_x * spec.sd_y * std::sqrt(spec.one_minus_rho2));
}

double bvn_upper_quadrant(double a, double b, double rho) {
  return bvn_upper_quadrant(a, b, rho, (1.0 - rho) * (1.0 + rho));
}

double bvn_upper_quadrant(double a, double b, double rho, double one_minus_rho2) {
  if (!(std::abs(rho) <= 1.0)) {
    throw std::domain_error("bvn_upper_quadrant: |rho| must not exceed 1");
  }
  // Far tails: one event is certain or impossible to double precision.
  constexpr double kTail = 40.0;
  if (a > kTail || b > kTail) {
    return 0.0;
  }
  if (a < -kTail) {
    return normal_sf(b);
  }
  if (b < -kTail) {
    return normal_sf(a);
  }
  const double h = a;
  double k = b;
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(rho) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(rho);
    for (int i = 0; i < 10; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (sgn * kBvnX[i] + 1.0) / 2.0);
        bvn += kBvnW[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return std::clamp(bvn * asr / (4.0 * kPi) + normal_sf(h) * normal_sf(k), 0.0, 1.0);
  }
  if (rho < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (one_minus_rho2 > 0.0) {
    const double as = one_minus_rho2;
    double a2 = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a2 * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double bb = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(2.0 * kPi) * normal_sf(bb / a2) * bb *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a2 /= 2.0;
    for (int i = 0; i < 10; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double xs = a2 * a2 * (sgn * kBvnX[i] + 1.0) * (sgn * kBvnX[i] + 1.0);
        const double rs = std::sqrt(1.0 - xs);
        bvn += a2 * kBvnW[i] * std::exp(-(bs / xs + hk) / 2.0) *
               (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs -
                (1.0 + c * xs * (1.0 + d * xs)));
      }
    }
    bvn = -bvn / (2.0 * kPi);
  }
  if (rho > 0.0) {
    bvn += normal_sf(std::max(h, k));
  } else {
    bvn = -bvn;
    if (k > h) {
      bvn += h < 0.0 ? normal_sf(-k) - normal_sf(-h) : normal_sf(h) - normal_sf(k);
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double bump_gauss_expectation(double mu, double s, double a, double n, int order) {
  const auto& family = MollifierFamily::standard();
  if (s == 0.0) {
    return family.scaled(n, mu - a);
  }
  const double lo = std::max(-1.0, n * (mu - a - 8.5 * s));
  const double hi = std::min(1.0, n * (mu - a + 8.5 * s));
  if (!(hi > lo)) {
    return 0.0;
  }
  const auto& gl = numerics::gauss_legendre(order);
  const double half = 0.5 * (hi - lo);
  double total = 0.0;
  for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
    const double u = lo + half * (gl.nodes[k] + 1.0);
    total += gl.weights[k] * family.base(u) * normal_pdf((a + u / n - mu) / s);
  }
  return total * half / s;
}

KernelEvaluator::KernelEvaluator(GFunction F, GFunction G, KernelOptions options)
    : F_(std::move(F)), G_(std::move(G)), options_(options) {
  if (options_.hermite_order < 2 || options_.bump_order < 2) {
    throw std::invalid_argument("KernelOptions: quadrature orders must be at least 2");
  }
}

void KernelEvaluator::check_level(int level) const {
  if (level < 0 || level >= kLevels) {
    throw std::invalid_argument("KernelEvaluator: unsupported refinement level");
  }
}

bool KernelEvaluator::p_is_zero() const noexcept {
  auto zero = [](const GFunction& f) {
    return !f.has_smooth_part() && f.jumps().empty() && f.smoothed_jumps().empty();
  };
  return zero(F_) || zero(G_);
}

bool KernelEvaluator::has_atoms_on_both_sides() const noexcept {
  return !F_.jumps().empty() && !G_.jumps().empty();
}

double KernelEvaluator::m(const BivariateGaussianSpec& spec, int level) const {
  check_level(level);
  const int order = options_.hermite_order << level;
  const int bump_order = options_.bump_order << level;
  const double sx = spec.sd_x;
  const double sy = spec.sd_y;
  const double rho = spec.rho;
  const double c = spec.rho_complement();
  const StepExpansion fe = expand_steps(F_, sx, bump_order);
  const StepExpansion ge = expand_steps(G_, sy, bump_order);
  const auto& fs = fe.steps;
  const auto& gs = ge.steps;
  const bool f_smooth = F_.has_smooth_part();
  const bool g_smooth = G_.has_smooth_part();
  const double bf = F_.base_value() + fe.constant;
  const double bg = G_.base_value() + ge.constant;
  auto f_val = [this](double x) { return F_.smooth_value(x); };
  auto g_val = [this](double y) { return G_.smooth_value(y); };

  std::vector<double> terms;
  terms.push_back(bf * bg);
  const auto& gh = numerics::gauss_hermite(order);
  if (f_smooth && g_smooth) {
    std::vector<double> rows(gh.nodes.size());
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      const double z = gh.nodes[i];
      const double fx = f_val(sx * z);
      double inner = 0.0;
      if (c == 0.0) {
        inner = g_val(sy * z);
      } else {
        for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
          inner += gh.weights[j] * g_val(sy * (rho * z + c * gh.nodes[j]));
        }
      }
      rows[i] = gh.weights[i] * fx * inner;
    }
    terms.push_back(numerics::pairwise_sum(rows));
  }
  if (f_smooth && bg != 0.0) {
    terms.push_back(bg * gh_mean(f_val, 0.0, sx, order));
  }
  if (g_smooth && bf != 0.0) {
    terms.push_back(bf * gh_mean(g_val, 0.0, sy, order));
  }
  if (f_smooth) {
    for (const auto& st : gs) {
      terms.push_back(st.size * smooth_step(f_val, sx, st.location / sy, rho, c, order));
    }
  }
  if (g_smooth) {
    for (const auto& st : fs) {
      terms.push_back(st.size * smooth_step(g_val, sy, st.location / sx, rho, c, order));
    }
  }
  if (bf != 0.0) {
    for (const auto& st : gs) {
      terms.push_back(bf * st.size * normal_sf(st.location / sy));
    }
  }
  if (bg != 0.0) {
    for (const auto& st : fs) {
      terms.push_back(bg * st.size * normal_sf(st.location / sx));
    }
  }
  for (const auto& a : fs) {
    for (const auto& b : gs) {
      terms.push_back(a.size * b.size *
                      bvn_upper_quadrant(a.location / sx, b.location / sy, rho, spec.one_minus_rho2));
    }
  }
  return numerics::pairwise_sum(terms);
}

double KernelEvaluator::p(const BivariateGaussianSpec& spec, int level) const {
  check_level(level);
  if (p_is_zero()) {
    return 0.0;
  }
  const int order = options_.hermite_order << level;
  const int bump_order = options_.bump_order << level;
  const double sx = spec.sd_x;
  const double sy = spec.sd_y;
  const double rho = spec.rho;
  const double c = spec.rho_complement();
  auto fd = [this](double x) { return F_.smooth_derivative(x); };
  auto gd = [this](double y) { return G_.smooth_derivative(y); };
  auto fx_density = [sx](double x) { return normal_pdf(x / sx) / sx; };
  auto fy_density = [sy](double y) { return normal_pdf(y / sy) / sy; };
  // E[G'(Y) | X = x] and E[F'(X) | Y = y]
  auto g_given_x = [&](double x) { return gh_mean(gd, rho * sy * x / sx, sy * c, order); };
  auto f_given_y = [&](double y) { return gh_mean(fd, rho * sx * y / sy, sx * c, order); };

  const bool f_dens = F_.has_smooth_part();
  const bool g_dens = G_.has_smooth_part();
  std::vector<double> terms;

  if (f_dens && g_dens) {
    const auto& gh = numerics::gauss_hermite(order);
    std::vector<double> rows(gh.nodes.size());
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      rows[i] = gh.weights[i] * fd(sx * gh.nodes[i]) * g_given_x(sx * gh.nodes[i]);
    }
    terms.push_back(numerics::pairwise_sum(rows));
  }
  // atoms of F
  for (const auto& a : F_.jumps()) {
    if (g_dens) {
      terms.push_back(a.size * fx_density(a.location) * g_given_x(a.location));
    }
    for (const auto& b : G_.jumps()) {
      if (spec.degenerate()) {
        if (a.location * sy == b.location * sx) {
          throw SingularPointError("p_kernel: atoms paired on the diagonal at the same location");
        }
        continue;
      }
      terms.push_back(a.size * b.size * density_at(spec, a.location, b.location));
    }
    for (const auto& r : G_.smoothed_jumps()) {
      terms.push_back(a.size * r.size * fx_density(a.location) *
                      bump_gauss_expectation(rho * sy * a.location / sx, sy * c, r.location, r.scale,
                                             bump_order));
    }
  }
  // smoothed jumps of F
  for (const auto& r : F_.smoothed_jumps()) {
    double with_dens = 0.0;
    double with_ramps = 0.0;
    const RampNodes nodes = ramp_nodes(r, sx, bump_order);
    for (std::size_t k = 0; k < nodes.x.size(); ++k) {
      const double x = nodes.x[k];
      const double fx = fx_density(x);
      if (g_dens) {
        with_dens += nodes.w[k] * fx * g_given_x(x);
      }
      for (const auto& q : G_.smoothed_jumps()) {
        with_ramps += nodes.w[k] * q.size * fx *
                      bump_gauss_expectation(rho * sy * x / sx, sy * c, q.location, q.scale, bump_order);
      }
    }
    terms.push_back(r.size * (with_dens + with_ramps));
    for (const auto& b : G_.jumps()) {
      terms.push_back(r.size * b.size * fy_density(b.location) *
                      bump_gauss_expectation(rho * sx * b.location / sy, sx * c, r.location, r.scale,
                                             bump_order));
    }
  }
  // atoms and smoothed jumps of G against the density of F
  if (f_dens) {
    for (const auto& b : G_.jumps()) {
      terms.push_back(b.size * fy_density(b.location) * f_given_y(b.location));
    }
    for (const auto& q : G_.smoothed_jumps()) {
      double s = 0.0;
      const RampNodes nodes = ramp_nodes(q, sy, bump_order);
      for (std::size_t k = 0; k < nodes.x.size(); ++k) {
        s += nodes.w[k] * fy_density(nodes.x[k]) * f_given_y(nodes.x[k]);
      }
      terms.push_back(q.size * s);
    }
  }
  return numerics::pairwise_sum(terms);
}

// Doubles the orders until two successive levels agree. Smooth coefficients
// with poles near the real axis (tanh) converge slowly under Gauss-Hermite
// once the standard deviation exceeds one.
KernelEstimate KernelEvaluator::escalate(const std::function<double(int)>& at_level) const {
  double coarse = at_level(0);
  KernelEstimate e{coarse, 0.0};
  for (int level = 1; level < kLevels; ++level) {
    e.value = at_level(level);
    e.error_estimate = std::abs(e.value - coarse);
    if (e.error_estimate <= options_.tolerance * std::max(1.0, std::abs(e.value))) {
      break;
    }
    coarse = e.value;
  }
  return e;
}

KernelEstimate KernelEvaluator::m_checked(const BivariateGaussianSpec& spec) const {
  return escalate([&](int level) { return m(spec, level); });
}

KernelEstimate KernelEvaluator::p_checked(const BivariateGaussianSpec& spec) const {
  return escalate([&](int level) { return p(spec, level); });
}

namespace {

double checked_or_throw(const KernelEstimate& e, const KernelOptions& options, const char* what) {
  if (e.error_estimate > options.tolerance * std::max(1.0, std::abs(e.value))) {
    throw QuadratureError(std::string(what) + ": Gauss-Hermite refinement check failed", e.value,
                          e.error_estimate);
  }
  return e.value;
}

void require_positive_times(double tau, double sigma, const char* what) {
  if (!(tau > 0.0) || !(sigma > 0.0)) {
    throw std::domain_error(std::string(what) + ": times must be positive");
  }
}

}  // namespace

double m_kernel(const GFunction& F, const GFunction& G, double tau, double sigma,
                const HurstParameter& H, const KernelOptions& options) {
  require_positive_times(tau, sigma, "m_kernel");
  const KernelEvaluator ev(F, G, options);
  const auto spec = BivariateGaussianSpec::from_times(tau, sigma, H);
  if (!options.verify) {
    return ev.m(spec);
  }
  return checked_or_throw(ev.m_checked(spec), options, "m_kernel");
}

double p_kernel(const GFunction& F, const GFunction& G, double tau, double sigma,
                const HurstParameter& H, const KernelOptions& options) {
  require_positive_times(tau, sigma, "p_kernel");
  const KernelEvaluator ev(F, G, options);
  const auto spec = BivariateGaussianSpec::from_times(tau, sigma, H);
  if (!options.verify) {
    return ev.p(spec);
  }
  return checked_or_throw(ev.p_checked(spec), options, "p_kernel");
}

double m_sgn_closed(double tau, double sigma, const HurstParameter& H) {
  require_positive_times(tau, sigma, "m_sgn_closed");
  const double rho = correlation_rho(tau, sigma, H);
  const double c = std::sqrt(one_minus_rho_squared(tau, sigma, H));
  // arccos(c) written through atan2 to stay accurate for rho near 0 and near 1
  return 2.0 / kPi * std::atan2(rho, c);
}

double p_sgn_closed(double tau, double sigma, const HurstParameter& H) {
  require_positive_times(tau, sigma, "p_sgn_closed");
  if (tau == sigma) {
    throw SingularPointError("p_sgn_closed: singular on the diagonal");
  }
  const double c = std::sqrt(one_minus_rho_squared(tau, sigma, H));
  // 4 f(0, 0) for the law of (B_tau, B_sigma)
  return 2.0 / (kPi * std::pow(tau * sigma, H.value()) * c);
}

double p_limit_brownian(double tau, double sigma) {
  require_positive_times(tau, sigma, "p_limit_brownian");
  if (tau == sigma) {
    throw SingularPointError("p_limit_brownian: singular on the diagonal");
  }
  const double lo = std::min(tau, sigma);
  const double hi = std::max(tau, sigma);
  return 2.0 / (kPi * std::sqrt(lo * (hi - lo)));
}

}  // namespace fbmxcov
