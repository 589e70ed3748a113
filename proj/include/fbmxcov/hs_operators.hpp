#pragma once

#include "fbmxcov/fbm_model.hpp"
#include "fbmxcov/gclass.hpp"

#include <Eigen/Core>

#include <functional>
#include <span>

namespace fbmxcov {

// Kernel of a Hilbert-Schmidt operator on the weighted space, piecewise
// constant on grid cells. Entry (i, j) is the average of k(s, t) over
// cell i x cell j. The operator acts through its first argument:
//
//   (K h)(t) = alpha_H * integral ds integral du  h(u) |u - s|^(2H-2) k(s, t)
//
//                 t -->  j
//            s  +---------+
//            |  |  k(i,j) |     h is paired with column j along rows i
//            v  |         |
//            i  +---------+
class KernelOperator {
 public:
  KernelOperator(TimeGrid grid, Eigen::MatrixXd kernel, double bound);
  // Bound defaults to max |entry|.
  KernelOperator(TimeGrid grid, Eigen::MatrixXd kernel);

  static KernelOperator zero(const TimeGrid& grid);
  // k(s, t) sampled at cell midpoints.
  static KernelOperator sampled(const TimeGrid& grid, const std::function<double(double, double)>& k);
  // k(s, t) = h(s) g(t).
  static KernelOperator rank_one(const GridFunction& h, const GridFunction& g);

  const TimeGrid& grid() const noexcept { return grid_; }
  const Eigen::MatrixXd& kernel() const noexcept { return kernel_; }
  double bound() const noexcept { return bound_; }
  KernelOperator transpose() const;

 private:
  TimeGrid grid_;
  Eigen::MatrixXd kernel_;
  double bound_;
};

// k(s, t) = alpha_H * double integral of k1(s, tau) k2(sigma, t) |tau - sigma|^(2H-2).
KernelOperator compose(const KernelOperator& k1, const KernelOperator& k2, const HurstParameter& H);

// alpha_H * double integral of k(s, t) |s - t|^(2H-2).
double trace(const KernelOperator& k, const HurstParameter& H);

double hs_inner_product(const KernelOperator& k1, const KernelOperator& k2, const HurstParameter& H);

// Kernel of the derivative of r -> F(B_r) 1[0,t](r):
// k(tau, sigma) = F'(B_sigma) 1[tau <= sigma <= t]. `path` holds B at the grid
// nodes; F' is taken at the cell average of the path and the indicator is
// averaged over each cell pair. Rejects F with sharp jumps.
KernelOperator malliavin_kernel(const GFunction& F, const TimeGrid& grid, std::span<const double> path,
                                double t);

// trace(compose(k1, k2)) from dense Gram matrices built out of R_H second
// differences. O(n^3); rejects grids with more than 512 cells.
double gram_trace_oracle(const KernelOperator& k1, const KernelOperator& k2, const HurstParameter& H);

}  // namespace fbmxcov
