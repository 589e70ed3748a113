#include "fbmxcov/hs_operators.hpp"

#include "fbmxcov/errors.hpp"
#include "fbmxcov/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fbmxcov {

namespace {

constexpr double kBoundSlack = 1e-12;

void require_same_grid(const KernelOperator& a, const KernelOperator& b) {
  if (!(a.grid() == b.grid())) {
    throw GridMismatchError("kernel operators live on different grids");
  }
}

// Sum of the entrywise product, pairwise so the result does not depend on
// how Eigen would block a reduction.
double frobenius_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd prod = a.cwiseProduct(b);
  return numerics::pairwise_sum(std::span<const double>(prod.data(), static_cast<std::size_t>(prod.size())));
}

}  // namespace

KernelOperator::KernelOperator(TimeGrid grid, Eigen::MatrixXd kernel, double bound)
    : grid_(std::move(grid)), kernel_(std::move(kernel)), bound_(bound) {
  const auto n = static_cast<Eigen::Index>(grid_.cells());
  if (kernel_.rows() != n || kernel_.cols() != n) {
    throw GridMismatchError("kernel is " + std::to_string(kernel_.rows()) + "x" +
                            std::to_string(kernel_.cols()) + " but the grid has " + std::to_string(n) +
                            " cells");
  }
  if (!std::isfinite(bound_) || bound_ < 0.0) {
    throw std::invalid_argument("kernel bound must be finite and non-negative");
  }
  if (!kernel_.allFinite()) {
    throw std::invalid_argument("kernel has non-finite entries");
  }
  const double m = kernel_.size() == 0 ? 0.0 : kernel_.cwiseAbs().maxCoeff();
  if (m > bound_ * (1.0 + kBoundSlack)) {
    throw std::invalid_argument("kernel entry " + std::to_string(m) + " exceeds declared bound " +
                                std::to_string(bound_));
  }
}

KernelOperator::KernelOperator(TimeGrid grid, Eigen::MatrixXd kernel)
    : KernelOperator(grid, kernel, kernel.size() == 0 ? 0.0 : kernel.cwiseAbs().maxCoeff()) {}

KernelOperator KernelOperator::zero(const TimeGrid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.cells());
  return KernelOperator(grid, Eigen::MatrixXd::Zero(n, n), 0.0);
}

KernelOperator KernelOperator::sampled(const TimeGrid& grid,
                                       const std::function<double(double, double)>& k) {
  const auto n = static_cast<Eigen::Index>(grid.cells());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = 0.5 * (grid.node(i) + grid.node(i + 1));
    for (Eigen::Index j = 0; j < n; ++j) {
      m(i, j) = k(s, 0.5 * (grid.node(j) + grid.node(j + 1)));
    }
  }
  return KernelOperator(grid, std::move(m));
}

KernelOperator KernelOperator::rank_one(const GridFunction& h, const GridFunction& g) {
  if (!(h.grid() == g.grid())) {
    throw GridMismatchError("rank-one factors live on different grids");
  }
  const auto n = static_cast<Eigen::Index>(h.grid().cells());
  const Eigen::Map<const Eigen::VectorXd> hv(h.values().data(), n);
  const Eigen::Map<const Eigen::VectorXd> gv(g.values().data(), n);
  return KernelOperator(h.grid(), hv * gv.transpose());
}

KernelOperator KernelOperator::transpose() const {
  return KernelOperator(grid_, kernel_.transpose(), bound_);
}

KernelOperator compose(const KernelOperator& k1, const KernelOperator& k2, const HurstParameter& H) {
  require_same_grid(k1, k2);
  const Eigen::MatrixXd W = cell_gram_matrix(k1.grid(), H);
  Eigen::MatrixXd k = k1.kernel() * W * k2.kernel();
  // W is entrywise non-negative and sums to R_H(T, T) = T^2H.
  const double mass = std::pow(k1.grid().horizon(), H.two_h());
  const double bound = k1.bound() * k2.bound() * mass;
  return KernelOperator(k1.grid(), std::move(k), bound * (1.0 + 1e-10));
}

double trace(const KernelOperator& k, const HurstParameter& H) {
  return frobenius_dot(k.kernel(), cell_gram_matrix(k.grid(), H));
}

double hs_inner_product(const KernelOperator& k1, const KernelOperator& k2, const HurstParameter& H) {
  require_same_grid(k1, k2);
  const Eigen::MatrixXd W = cell_gram_matrix(k1.grid(), H);
  const Eigen::MatrixXd wkw = W * k1.kernel() * W;
  return frobenius_dot(wkw, k2.kernel());
}

KernelOperator malliavin_kernel(const GFunction& F, const TimeGrid& grid, std::span<const double> path,
                                double t) {
  if (!F.jumps().empty()) {
    throw std::invalid_argument("malliavin_kernel: '" + F.label() +
                                "' has jumps, so its derivative is not a function; mollify it first");
  }
  if (path.size() != grid.nodes().size()) {
    throw GridMismatchError("path has " + std::to_string(path.size()) + " values for " +
                            std::to_string(grid.nodes().size()) + " grid nodes");
  }
  const auto end = grid.node_index(t);
  if (!end) {
    throw std::invalid_argument("malliavin_kernel: t = " + std::to_string(t) + " is not a grid node");
  }
  const auto n = static_cast<Eigen::Index>(grid.cells());
  const auto m = static_cast<Eigen::Index>(*end);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index b = 0; b < m; ++b) {
    const double d = F.ac_derivative(0.5 * (path[b] + path[b + 1]));
    for (Eigen::Index a = 0; a < b; ++a) {
      k(a, b) = d;
    }
    k(b, b) = 0.5 * d;
  }
  return KernelOperator(grid, std::move(k));
}

double gram_trace_oracle(const KernelOperator& k1, const KernelOperator& k2, const HurstParameter& H) {
  require_same_grid(k1, k2);
  const std::size_t n = k1.grid().cells();
  if (n > 512) {
    throw std::invalid_argument("gram_trace_oracle: " + std::to_string(n) + " cells exceeds 512");
  }
  const auto nodes = k1.grid().nodes();
  // <1[x_i, x_i+1], 1[x_j, x_j+1]> as a second difference of R_H.
  Eigen::MatrixXd W(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      W(i, j) = covariance_rh(nodes[i + 1], nodes[j + 1], H) - covariance_rh(nodes[i], nodes[j + 1], H) -
                covariance_rh(nodes[i + 1], nodes[j], H) + covariance_rh(nodes[i], nodes[j], H);
    }
  }
  const Eigen::MatrixXd prod = W * k1.kernel() * W * k2.kernel();
  return prod.trace();
}

}  // namespace fbmxcov
