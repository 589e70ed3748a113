#include "fbmxcov/quadrature.hpp"

#include "fbmxcov/errors.hpp"
#include "fbmxcov/numerics.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <mutex>
#include <unordered_map>

namespace fbmxcov {

namespace {

constexpr std::size_t kChunk = 256;
constexpr int kProbeCount = 5;

double origin_exponent(const HurstParameter& H) { return 2.0 / H.value(); }

void add_diagonal_triangle(std::vector<MeshNode>& out, double m, bool below,
                           const numerics::GradedRule& ra, const numerics::GradedRule& rb) {
  for (std::size_t i = 0; i < ra.nodes.size(); ++i) {
    const double a = ra.nodes[i];
    const double along = m * a;
    for (std::size_t j = 0; j < rb.nodes.size(); ++j) {
      const double across = along * rb.nodes[j];
      const double gap = along * rb.complements[j];
      const double w = m * along * ra.weights[i] * rb.weights[j];
      if (below) {
        out.push_back({along, across, gap, w});
      } else {
        out.push_back({across, along, gap, w});
      }
    }
  }
}

// Rectangle [m, m + len] x [0, m] in (long, short) coordinates, written as
// d1 = long - m, d2 = m - short and split into two triangles at d1 = d2 = 0.
void add_corner(std::vector<MeshNode>& out, double m, double len, bool long_is_tau,
                const numerics::GradedRule& ra_lo, const numerics::GradedRule& ra_hi,
                const numerics::GradedRule& rb) {
  auto push = [&](double lng, double shrt, double gap, double w) {
    if (long_is_tau) {
      out.push_back({lng, shrt, gap, w});
    } else {
      out.push_back({shrt, lng, gap, w});
    }
  };
  // d1 = len a, d2 = m a b
  for (std::size_t i = 0; i < ra_lo.nodes.size(); ++i) {
    const double a = ra_lo.nodes[i];
    for (std::size_t j = 0; j < rb.nodes.size(); ++j) {
      const double b = rb.nodes[j];
      const double d1 = len * a;
      const double d2 = m * a * b;
      push(m + d1, m * (1.0 - a * b), d1 + d2, len * m * a * ra_lo.weights[i] * rb.weights[j]);
    }
  }
  // d2 = m a, d1 = len a b; a -> 1 is the axis short = 0
  for (std::size_t i = 0; i < ra_hi.nodes.size(); ++i) {
    const double a = ra_hi.nodes[i];
    for (std::size_t j = 0; j < rb.nodes.size(); ++j) {
      const double b = rb.nodes[j];
      const double d1 = len * a * b;
      const double d2 = m * a;
      push(m + d1, m * ra_hi.complements[i], d1 + d2, len * m * a * ra_hi.weights[i] * rb.weights[j]);
    }
  }
}

struct NodeKey {
  std::uint64_t tau, sigma, gap;
  bool operator==(const NodeKey&) const = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const noexcept {
    std::uint64_t h = k.tau * 0x9E3779B97F4A7C15ULL;
    h ^= k.sigma + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
    h ^= k.gap + 0x85EBCA77C2B2AE63ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

class KernelCache {
 public:
  std::optional<std::pair<double, double>> find(const MeshNode& n) {
    std::lock_guard lock(mutex_);
    auto it = map_.find(key(n));
    if (it == map_.end()) {
      return std::nullopt;
    }
    return it->second;
  }
  void store(const MeshNode& n, double m, double p) {
    std::lock_guard lock(mutex_);
    map_.emplace(key(n), std::make_pair(m, p));
  }

 private:
  static NodeKey key(const MeshNode& n) {
    return {std::bit_cast<std::uint64_t>(n.tau), std::bit_cast<std::uint64_t>(n.sigma),
            std::bit_cast<std::uint64_t>(n.gap)};
  }
  std::mutex mutex_;
  std::unordered_map<NodeKey, std::pair<double, double>, NodeKeyHash> map_;
};

struct MeshSums {
  double isometry;
  double trace;
  double isometry_weight;  // sum of |w| alpha gap^(2H-2)
  double trace_weight;     // sum of |w| alpha gamma
};

MeshSums integrate_mesh(const std::vector<MeshNode>& mesh, const KernelEvaluator& ev,
                        const HurstParameter& H, unsigned threads, KernelCache* cache) {
  const double alpha = alpha_h(H);
  const double q = H.two_h_minus_two();
  const bool need_p = !ev.p_is_zero();
  std::vector<double> iso(mesh.size()), tr(mesh.size()), wiso(mesh.size()), wtr(mesh.size());
  const std::size_t chunks = (mesh.size() + kChunk - 1) / kChunk;
  numerics::parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(mesh.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const MeshNode& n = mesh[i];
      double mv = 0.0;
      double pv = 0.0;
      std::optional<std::pair<double, double>> hit;
      if (cache) {
        hit = cache->find(n);
      }
      if (hit) {
        mv = hit->first;
        pv = hit->second;
      } else {
        const auto spec = BivariateGaussianSpec::from_times(n.tau, n.sigma, H, n.gap);
        mv = ev.m(spec);
        pv = need_p ? ev.p(spec) : 0.0;
        if (cache) {
          cache->store(n, mv, pv);
        }
      }
      const double wi = n.weight * alpha * std::pow(n.gap, q);
      const double wt = need_p ? n.weight * alpha * gamma_kernel(n.tau, n.sigma, H, n.gap) : 0.0;
      iso[i] = wi * mv;
      tr[i] = wt * pv;
      wiso[i] = std::abs(wi);
      wtr[i] = std::abs(wt);
    }
  });
  return {numerics::pairwise_sum(iso), numerics::pairwise_sum(tr), numerics::pairwise_sum(wiso),
          numerics::pairwise_sum(wtr)};
}

// Largest change of M and P at a few mesh nodes when the Gauss-Hermite and
// bump orders are doubled.
std::pair<double, double> kernel_probe(const std::vector<MeshNode>& mesh, const KernelEvaluator& ev,
                                       const HurstParameter& H) {
  double dm = 0.0;
  double dp = 0.0;
  for (int k = 0; k < kProbeCount; ++k) {
    const MeshNode& n = mesh[(mesh.size() * (2 * k + 1)) / (2 * kProbeCount)];
    const auto spec = BivariateGaussianSpec::from_times(n.tau, n.sigma, H, n.gap);
    dm = std::max(dm, std::abs(ev.m(spec, 1) - ev.m(spec, 0)));
    if (!ev.p_is_zero()) {
      dp = std::max(dp, std::abs(ev.p(spec, 1) - ev.p(spec, 0)));
    }
  }
  return {dm, dp};
}

void check_times(double t, double s) {
  if (!(t > 0.0) || !(s > 0.0) || !std::isfinite(t) || !std::isfinite(s)) {
    throw std::domain_error("cross_covariance: t and s must be positive and finite");
  }
}

CovarianceResult cross_covariance_impl(const KernelEvaluator& ev, double t, double s,
                                       const HurstParameter& H, const QuadratureConfig& cfg,
                                       KernelCache* cache) {
  check_times(t, s);
  const double qd = cfg.diagonal_exponent(H);
  const auto coarse_mesh =
      covariance_mesh(t, s, H, cfg.base_cells_per_axis, cfg.gauss_nodes_per_cell, qd);
  const auto fine_mesh =
      covariance_mesh(t, s, H, 2 * cfg.base_cells_per_axis, cfg.gauss_nodes_per_cell, qd);
  const MeshSums coarse = integrate_mesh(coarse_mesh, ev, H, cfg.threads, cache);
  const MeshSums fine = integrate_mesh(fine_mesh, ev, H, cfg.threads, cache);

  CovarianceResult r;
  r.isometry_term = fine.isometry;
  r.trace_term = fine.trace;
  r.value = r.isometry_term + r.trace_term;
  const double coarse_value = coarse.isometry + coarse.trace;
  const double scale = std::max(std::abs(r.value), std::numeric_limits<double>::min());
  double err = std::abs(r.value - coarse_value);
  if (cfg.kernel.verify) {
    const auto [dm, dp] = kernel_probe(fine_mesh, ev, H);
    err = std::max(err, dm * fine.isometry_weight + dp * fine.trace_weight);
  }
  // Changes below this are rounding noise in kernels that cancel to zero,
  // such as E sin(B) = 0. |F(x)| <= L(1 + |x|) bounds the kernels' size.
  const double noise = 1e-13 * (fine.isometry_weight + fine.trace_weight) * linear_growth_bound(ev.f()) *
                       linear_growth_bound(ev.g()) * (1.0 + std::pow(t, H.value())) *
                       (1.0 + std::pow(s, H.value()));
  r.est_rel_error = err <= noise ? 0.0 : err / scale;
  if (r.est_rel_error > cfg.target_rel_error) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "cross_covariance: estimated relative error %.3g exceeds target %.3g",
                  r.est_rel_error, cfg.target_rel_error);
    throw NonConvergenceError(msg,
                              r, coarse_value);
  }
  return r;
}

}  // namespace

void QuadratureConfig::validate() const {
  if (base_cells_per_axis < 8) {
    throw std::invalid_argument("QuadratureConfig: base_cells_per_axis must be at least 8");
  }
  if (gauss_nodes_per_cell < 4 || gauss_nodes_per_cell > 16) {
    throw std::invalid_argument("QuadratureConfig: gauss_nodes_per_cell must be in [4, 16]");
  }
  if (diagonal_grading_exponent && !(*diagonal_grading_exponent >= 1.0)) {
    throw std::invalid_argument("QuadratureConfig: diagonal_grading_exponent must be >= 1");
  }
  if (!(target_rel_error > 0.0)) {
    throw std::invalid_argument("QuadratureConfig: target_rel_error must be positive");
  }
}

double QuadratureConfig::diagonal_exponent(const HurstParameter& H) const {
  if (diagonal_grading_exponent) {
    return *diagonal_grading_exponent;
  }
  // Makes |tau - sigma|^(2H-2) linear in the graded variable, and |tau - sigma|^(-H)
  // as well until that would need q > 10. Past 10 the nodes crowd the diagonal
  // and starve the rest of the triangle.
  const double q = std::max(2.0 / H.two_h_minus_one(), std::min(2.0 / (1.0 - H.value()), 10.0));
  return std::clamp(q, 2.0, 64.0);
}

std::vector<MeshNode> covariance_mesh(double t, double s, const HurstParameter& H, int cells,
                                      int nodes_per_cell, double diagonal_exponent) {
  check_times(t, s);
  const double m = std::min(t, s);
  const double qo = origin_exponent(H);
  const auto ra = numerics::graded_rule(cells, nodes_per_cell, qo, 1.0);
  const auto rb = numerics::graded_rule(cells, nodes_per_cell, 2.0, diagonal_exponent);
  std::vector<MeshNode> out;
  out.reserve(2 * ra.nodes.size() * rb.nodes.size() * (t == s ? 1 : 2));
  add_diagonal_triangle(out, m, true, ra, rb);
  add_diagonal_triangle(out, m, false, ra, rb);
  if (t != s) {
    const double len = std::max(t, s) - m;
    const auto ra_hi = numerics::graded_rule(cells, nodes_per_cell, qo, 2.0);
    const auto ru = numerics::graded_rule(cells, nodes_per_cell, 1.0, 1.0);
    add_corner(out, m, len, t > s, ra, ra_hi, ru);
  }
  return out;
}

CovarianceResult cross_covariance(const GFunction& F, const GFunction& G, double t, double s,
                                  const HurstParameter& H, const QuadratureConfig& cfg) {
  cfg.validate();
  const KernelEvaluator ev(F, G, cfg.kernel);
  return cross_covariance_impl(ev, t, s, H, cfg, nullptr);
}

std::vector<std::vector<CovarianceResult>> covariance_surface(const GFunction& F, const GFunction& G,
                                                              std::span<const double> t_nodes,
                                                              std::span<const double> s_nodes,
                                                              const HurstParameter& H,
                                                              const QuadratureConfig& cfg) {
  cfg.validate();
  const KernelEvaluator ev(F, G, cfg.kernel);
  KernelCache cache;
  std::vector<std::vector<CovarianceResult>> out(t_nodes.size(),
                                                 std::vector<CovarianceResult>(s_nodes.size()));
  for (std::size_t i = 0; i < t_nodes.size(); ++i) {
    for (std::size_t j = 0; j < s_nodes.size(); ++j) {
      out[i][j] = cross_covariance_impl(ev, t_nodes[i], s_nodes[j], H, cfg, &cache);
    }
  }
  return out;
}

KernelEstimate integrand_at_checked(const GFunction& F, const GFunction& G, double tau, double sigma,
                                    const HurstParameter& H, const KernelOptions& options) {
  if (!(tau > 0.0) || !(sigma > 0.0)) {
    throw std::domain_error("integrand_at: times must be positive");
  }
  if (tau == sigma) {
    throw SingularPointError("integrand_at: the diagonal tau == sigma is singular");
  }
  const KernelEvaluator ev(F, G, options);
  const auto spec = BivariateGaussianSpec::from_times(tau, sigma, H);
  const double alpha = alpha_h(H);
  const double w_iso = alpha * std::pow(std::abs(tau - sigma), H.two_h_minus_two());
  const double w_tr = alpha * gamma_kernel(tau, sigma, H);
  const auto m = ev.m_checked(spec);
  const auto p = ev.p_checked(spec);
  return {w_iso * m.value + w_tr * p.value, w_iso * m.error_estimate + w_tr * p.error_estimate};
}

double integrand_at(const GFunction& F, const GFunction& G, double tau, double sigma,
                    const HurstParameter& H, const KernelOptions& options) {
  const auto r = integrand_at_checked(F, G, tau, sigma, H, options);
  if (options.verify && r.error_estimate > options.tolerance * std::max(1.0, std::abs(r.value))) {
    throw QuadratureError("integrand_at: kernel refinement check failed", r.value, r.error_estimate);
  }
  return r.value;
}

namespace {

constexpr int kExtraDoublings = 3;

template <class Integrand>
std::pair<double, double> doubled_mesh_integral(double t, double s, const HurstParameter& H,
                                                const QuadratureConfig& cfg, Integrand f) {
  cfg.validate();
  double values[2];
  for (int level = 0; level < 2; ++level) {
    const auto mesh = covariance_mesh(t, s, H, cfg.base_cells_per_axis << level,
                                      cfg.gauss_nodes_per_cell, cfg.diagonal_exponent(H));
    std::vector<double> terms(mesh.size());
    const std::size_t chunks = (mesh.size() + kChunk - 1) / kChunk;
    numerics::parallel_for(chunks, cfg.threads, [&](std::size_t c) {
      const std::size_t end = std::min(mesh.size(), (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        terms[i] = mesh[i].weight * f(mesh[i]);
      }
    });
    values[level] = numerics::pairwise_sum(terms);
  }
  return {values[0], values[1]};
}

}  // namespace

double weighted_density_kernel(double t, double s, const HurstParameter& H, double x, double y,
                               const QuadratureConfig& cfg) {
  check_times(t, s);
  // Away from x = y the density switches on sharply at a distance from the
  // diagonal, which the diagonal grading does not resolve; a few more global
  // doublings do.
  QuadratureConfig c = cfg;
  double fine = 0.0;
  double err = 0.0;
  for (int extra = 0; extra <= kExtraDoublings; ++extra) {
    const auto [coarse, f] = doubled_mesh_integral(t, s, H, c, [&](const MeshNode& n) {
      const auto spec = BivariateGaussianSpec::from_times(n.tau, n.sigma, H, n.gap);
      return gamma_kernel(n.tau, n.sigma, H, n.gap) * density_at(spec, x, y);
    });
    fine = f;
    err = std::abs(fine - coarse);
    if (err <= cfg.target_rel_error * std::abs(fine) || err <= 1e-300) {
      return fine;
    }
    c.base_cells_per_axis *= 2;
  }
  throw QuadratureError("weighted_density_kernel: refinement check failed", fine, err);
}

FinitenessResult finiteness_check(const HurstParameter& H, double T, const QuadratureConfig& cfg) {
  check_times(T, T);
  const auto [coarse, fine] = doubled_mesh_integral(T, T, H, cfg, [&](const MeshNode& n) {
    const double c = std::sqrt(one_minus_rho_squared(n.tau, n.sigma, H, n.gap));
    return gamma_kernel(n.tau, n.sigma, H, n.gap) / (std::pow(n.tau * n.sigma, H.value()) * c);
  });
  const double change = std::abs(fine - coarse) / std::abs(fine);
  if (!std::isfinite(fine) || !(change < 0.01)) {
    throw QuadratureError("finiteness_check: value not stable under refinement", fine,
                          std::abs(fine - coarse));
  }
  return {fine, coarse, change};
}

}  // namespace fbmxcov
