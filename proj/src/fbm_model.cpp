#include "fbmxcov/fbm_model.hpp"

#include "fbmxcov/errors.hpp"
#include "fbmxcov/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fbmxcov {

HurstParameter::HurstParameter(double h) : h_(h) {
  if (!(h > 0.5 && h < 1.0)) {
    throw std::domain_error("Hurst parameter must satisfy 1/2 < H < 1, got " + std::to_string(h));
  }
}

HurstParameter HurstParameter::limit_study(double h) {
  if (!(h >= 0.5 && h < 1.0)) {
    throw std::domain_error("limit-study Hurst parameter must satisfy 1/2 <= H < 1, got " +
                            std::to_string(h));
  }
  return HurstParameter(h, Unchecked{});
}

double alpha_h(const HurstParameter& H) { return H.value() * H.two_h_minus_one(); }

double covariance_rh(double t, double s, const HurstParameter& H) {
  if (t < 0.0 || s < 0.0) {
    throw std::domain_error("covariance_rh: times must be non-negative");
  }
  const double p = H.two_h();
  return 0.5 * (std::pow(t, p) + std::pow(s, p) - std::pow(std::abs(t - s), p));
}

double correlation_rho(double tau, double sigma, const HurstParameter& H) {
  if (!(tau > 0.0) || !(sigma > 0.0)) {
    throw std::domain_error("correlation_rho: times must be positive");
  }
  if (tau == sigma) {
    return 1.0;
  }
  const double rho = covariance_rh(tau, sigma, H) / std::pow(tau * sigma, H.value());
  return std::min(rho, 1.0);
}

double increment_covariance(double small, double gap, const HurstParameter& H) {
  if (small <= 0.0 || gap <= 0.0) {
    return 0.0;
  }
  const double p = H.two_h();
  if (gap < small) {
    return 0.5 * (std::pow(small, p) * std::expm1(p * std::log1p(gap / small)) - std::pow(gap, p));
  }
  const double big = small + gap;
  return 0.5 * (-std::pow(big, p) * std::expm1(p * std::log1p(-small / big)) - std::pow(small, p));
}

double one_minus_rho_squared(double tau, double sigma, const HurstParameter& H,
                             std::optional<double> gap) {
  if (!(tau > 0.0) || !(sigma > 0.0)) {
    throw std::domain_error("one_minus_rho_squared: times must be positive");
  }
  const double small = std::min(tau, sigma);
  const double big = std::max(tau, sigma);
  const double h = gap ? std::abs(*gap) : big - small;
  if (h == 0.0) {
    return 0.0;
  }
  const double p = H.two_h();
  const double c = increment_covariance(small, h, H);
  const double det = std::pow(small, p) * std::pow(h, p) - c * c;
  return std::max(0.0, det / (std::pow(small, p) * std::pow(big, p)));
}

double gamma_kernel(double tau, double sigma, const HurstParameter& H, std::optional<double> gap) {
  if (tau < 0.0 || sigma < 0.0) {
    throw std::domain_error("gamma_kernel: times must be non-negative");
  }
  const double big = std::max(tau, sigma);
  const double small = std::min(tau, sigma);
  if (big == 0.0) {
    return 0.0;
  }
  const double h = gap ? std::abs(*gap) : big - small;
  const double p = H.two_h_minus_one();
  // big^p - h^p written to stay accurate when h is close to big
  const double log_ratio = std::log(h / big);
  if (p == 0.0) {
    // H = 1/2 limit of H/(2H-1) * (big^p - h^p) * 2
    return -log_ratio;
  }
  const double first = -std::pow(big, p) * std::expm1(p * log_ratio);
  const double second = (small > 0.0 ? std::pow(small, p) : 0.0) + (h > 0.0 ? std::pow(h, p) : 0.0);
  return H.value() / p * first * second;
}

GammaFactors gamma_factorization_terms(double tau, double sigma, const HurstParameter& H) {
  if (!(tau > 0.0) || !(sigma > 0.0)) {
    throw std::domain_error("gamma_factorization_terms: times must be positive");
  }
  const double p = H.two_h_minus_one();
  if (p <= 0.0) {
    throw std::domain_error("gamma_factorization_terms: requires H > 1/2");
  }
  const double h = std::abs(tau - sigma);
  // integral over [0, a] of |u - b|^(p-1) du, times p
  auto scaled = [p, h](double a, double b) {
    if (a >= b) {
      return std::pow(b, p) + std::pow(h, p);
    }
    return -std::pow(b, p) * std::expm1(p * std::log1p(-a / b));
  };
  return {scaled(tau, sigma) / p, scaled(sigma, tau) / p};
}

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) {
    throw std::invalid_argument("TimeGrid: at least two nodes are required");
  }
  if (nodes_.front() != 0.0) {
    throw std::invalid_argument("TimeGrid: first node must be 0");
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (!(nodes_[i] > nodes_[i - 1]) || !std::isfinite(nodes_[i])) {
      throw std::invalid_argument("TimeGrid: nodes must be finite and strictly increasing");
    }
  }
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t cells) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("TimeGrid::uniform: horizon must be positive");
  }
  if (cells == 0) {
    throw std::invalid_argument("TimeGrid::uniform: need at least one cell");
  }
  std::vector<double> nodes(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) {
    nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(cells);
  }
  nodes.back() = horizon;
  return TimeGrid(std::move(nodes));
}

std::optional<std::size_t> TimeGrid::node_index(double t, double rel_tol) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
  const double tol = rel_tol * horizon();
  std::optional<std::size_t> best;
  for (auto cand : {it, it == nodes_.begin() ? it : it - 1}) {
    if (cand != nodes_.end() && std::abs(*cand - t) <= tol) {
      best = static_cast<std::size_t>(cand - nodes_.begin());
    }
  }
  return best;
}

bool TimeGrid::is_uniform(double rel_tol) const {
  const double h = horizon() / static_cast<double>(cells());
  for (std::size_t i = 0; i < cells(); ++i) {
    if (std::abs(width(i) - h) > rel_tol * h) {
      return false;
    }
  }
  return true;
}

GridFunction::GridFunction(TimeGrid grid, std::vector<double> cell_values)
    : grid_(std::move(grid)), values_(std::move(cell_values)) {
  if (values_.size() != grid_.cells()) {
    throw std::invalid_argument("GridFunction: need one value per cell");
  }
}

GridFunction GridFunction::indicator(const TimeGrid& grid, double a, double b) {
  std::vector<double> v(grid.cells(), 0.0);
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    const double lo = std::max(a, grid.node(k));
    const double hi = std::min(b, grid.node(k + 1));
    if (hi > lo) {
      v[k] = (hi - lo) / grid.width(k);
    }
  }
  return GridFunction(grid, std::move(v));
}

GridFunction GridFunction::abs() const {
  std::vector<double> v(values_);
  for (double& x : v) {
    x = std::abs(x);
  }
  return GridFunction(grid_, std::move(v));
}

double cell_pair_weight(double a0, double a1, double b0, double b1, const HurstParameter& H) {
  const double wa = a1 - a0;
  const double wb = b1 - b0;
  const double gap = std::max(b0 - a1, a0 - b1);
  if (gap >= 4.0 * std::max(wa, wb)) {
    // Far apart: the corner formula would cancel; the integrand is smooth here.
    const auto& gl = numerics::gauss_legendre(8);
    const double q = H.two_h_minus_two();
    double s = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double x = a0 + 0.5 * wa * (gl.nodes[i] + 1.0);
      double row = 0.0;
      for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
        const double y = b0 + 0.5 * wb * (gl.nodes[j] + 1.0);
        row += gl.weights[j] * std::pow(std::abs(x - y), q);
      }
      s += gl.weights[i] * row;
    }
    return alpha_h(H) * 0.25 * wa * wb * s;
  }
  const double p = H.two_h();
  auto g = [p](double u) { return std::pow(std::abs(u), p); };
  return 0.5 * (g(a1 - b0) + g(a0 - b1) - g(a1 - b1) - g(a0 - b0));
}

Eigen::MatrixXd cell_gram_matrix(const TimeGrid& grid, const HurstParameter& H) {
  const auto n = static_cast<Eigen::Index>(grid.cells());
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      w(i, j) = w(j, i) = cell_pair_weight(grid.node(i), grid.node(i + 1), grid.node(j),
                                           grid.node(j + 1), H);
    }
  }
  return w;
}

double weighted_inner_product(const GridFunction& f, const GridFunction& g, const HurstParameter& H) {
  if (!(f.grid() == g.grid())) {
    throw GridMismatchError("weighted_inner_product: functions live on different grids");
  }
  const TimeGrid& grid = f.grid();
  const std::size_t n = grid.cells();
  std::vector<double> rows(n, 0.0);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (f.values()[i] == 0.0) {
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      terms[j] = g.values()[j] == 0.0
                     ? 0.0
                     : g.values()[j] * cell_pair_weight(grid.node(i), grid.node(i + 1), grid.node(j),
                                                        grid.node(j + 1), H);
    }
    rows[i] = f.values()[i] * numerics::pairwise_sum(terms);
  }
  return numerics::pairwise_sum(rows);
}

double abs_h_norm(const GridFunction& f, const HurstParameter& H) {
  const GridFunction a = f.abs();
  return std::sqrt(std::max(0.0, weighted_inner_product(a, a, H)));
}

}  // namespace fbmxcov
