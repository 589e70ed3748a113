#include "fbmxcov/quadrature.hpp"
#include "fbmxcov/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace fbmxcov;

TEST_SUITE("quadrature") {

TEST_CASE("config validation") {
  QuadratureConfig c;
  c.gauss_nodes_per_cell = 0;
  CHECK_THROWS(c.validate());
  QuadratureConfig d;
  d.diagonal_grading_exponent = 0.5;
  CHECK_THROWS(d.validate());
  CHECK_THROWS(cross_covariance(GFunction::constant(1), GFunction::constant(1), -1, 1, HurstParameter(0.7)));
}

TEST_CASE("mesh stays off the diagonal and the axes") {
  for (auto [t, s] : {std::pair{1.0, 1.0}, {2.0, 1.0}, {0.5, 1.5}}) {
    const auto mesh = covariance_mesh(t, s, HurstParameter(0.75), 8, 6, 8.0);
    double area = 0.0;
    for (const auto& m : mesh) {
      CHECK(m.gap > 0.0);
      CHECK(m.tau > 0.0);
      CHECK(m.sigma > 0.0);
      area += m.weight;
    }
    CHECK(area == doctest::Approx(t * s).epsilon(1e-10));
  }
}

TEST_CASE("constant coefficients reduce to R_H") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> time(0.1, 3.0), hurst(0.55, 0.95);
  for (int i = 0; i < 20; ++i) {
    const double t = time(gen), s = time(gen);
    const HurstParameter H(hurst(gen));
    const auto r = cross_covariance(GFunction::constant(1), GFunction::constant(1), t, s, H);
    CHECK(r.trace_term == 0.0);
    CHECK(r.value == doctest::Approx(oracle::rh(t, s, H.value())).epsilon(1e-6));
    CHECK(r.value == r.isometry_term + r.trace_term);
  }
}

TEST_CASE("identity coefficients match R_H^2 / 2") {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> time(0.2, 2.5), hurst(0.55, 0.9);
  for (int i = 0; i < 4; ++i) {
    const double t = time(gen), s = time(gen);
    const HurstParameter H(hurst(gen));
    const auto r = cross_covariance(GFunction::identity(), GFunction::identity(), t, s, H);
    const double want = oracle::id_covariance(t, s, H.value());
    CHECK(std::abs(r.value - want) / want <= std::max(1e-4, 3 * r.est_rel_error));
    CHECK(r.value == r.isometry_term + r.trace_term);
  }
  const auto one = cross_covariance(GFunction::identity(), GFunction::identity(), 1, 1, HurstParameter(0.75));
  CHECK(one.value == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("swap symmetry") {
  const HurstParameter H(0.7);
  const auto a = cross_covariance(GFunction::sine(), GFunction::tanh(), 1.3, 0.8, H);
  const auto b = cross_covariance(GFunction::tanh(), GFunction::sine(), 0.8, 1.3, H);
  CHECK(a.value == doctest::Approx(b.value).epsilon(std::max(1e-12, 2 * a.est_rel_error)));
}

TEST_CASE("sgn covariance is finite and converged") {
  const auto r = cross_covariance(GFunction::sign(), GFunction::sign(), 1, 1, HurstParameter(0.75));
  CHECK(std::isfinite(r.value));
  CHECK(r.est_rel_error < 1e-6);
  CHECK(r.trace_term > 0.0);
}

TEST_CASE("sgn refinement shrinks the doubling gap threefold") {
  const auto sgn = GFunction::sign();
  const HurstParameter H(0.75);
  auto value = [&](int cells) {
    QuadratureConfig c;
    c.base_cells_per_axis = cells;
    c.target_rel_error = 1.0;
    return cross_covariance(sgn, sgn, 1, 1, H, c).value;
  };
  const double v1 = value(8), v2 = value(16), v4 = value(32);
  CHECK(std::abs(v2 - v1) >= 3.0 * std::abs(v4 - v2));
}

TEST_CASE("surface agrees with single evaluations") {
  const HurstParameter H(0.8);
  const std::vector<double> nodes{0.5, 1.0, 1.5};
  const auto id = GFunction::identity();
  const auto surf = covariance_surface(id, id, nodes, nodes, H);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    CHECK(surf[i][i].value == doctest::Approx(0.5 * std::pow(nodes[i], 3.2)).epsilon(1e-4));
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      CHECK(surf[i][j].value == doctest::Approx(surf[j][i].value).epsilon(1e-12));
    }
  }
  const auto single = cross_covariance(id, id, nodes[2], nodes[0], H);
  CHECK(surf[2][0].value == doctest::Approx(single.value).epsilon(1e-12));
  const auto c = covariance_surface(GFunction::constant(1), GFunction::constant(1), nodes, nodes, H);
  CHECK(c[1][2].value == doctest::Approx(oracle::rh(1.0, 1.5, 0.8)).epsilon(1e-6));
}

TEST_CASE("integrand examples") {
  const HurstParameter H(0.75);
  CHECK(integrand_at(GFunction::constant(1), GFunction::constant(1), 1.7, 0.4, H) ==
        doctest::Approx(0.375 * std::pow(1.3, -0.5)).epsilon(1e-12));
  const auto sgn = GFunction::sign();
  const double a = integrand_at(sgn, sgn, 1.0, 0.5, H);
  const double b = integrand_at(sgn, sgn, 1.5, 1.0, H);
  CHECK(std::abs(a - b) > 0.05 * std::max(a, b));
  CHECK_THROWS_AS(integrand_at(sgn, sgn, 1.0, 1.0, H), SingularPointError);
}

TEST_CASE("mixed difference of the surface tends to the integrand") {
  const HurstParameter H(0.75);
  const auto id = GFunction::identity();
  const double exact = integrand_at(id, id, 2.0, 1.0, H);
  auto mixed = [&](double h) {
    const std::vector<double> ts{2.0 - h, 2.0 + h}, ss{1.0 - h, 1.0 + h};
    const auto v = covariance_surface(id, id, ts, ss, H);
    return (v[1][1].value - v[1][0].value - v[0][1].value + v[0][0].value) / (4 * h * h);
  };
  const double e1 = std::abs(mixed(0.2) - exact);
  const double e2 = std::abs(mixed(0.1) - exact);
  CHECK(std::log2(e1 / e2) >= 1.0);
}

TEST_CASE("occupation kernel") {
  const HurstParameter H(0.75);
  const double at0 = weighted_density_kernel(1, 1, H, 0, 0);
  CHECK(at0 > 0.0);
  for (double x : {-1.0, -0.3, 0.4, 1.2}) {
    for (double y : {-0.8, 0.2, 1.0}) {
      const double v = weighted_density_kernel(1, 1, H, x, y);
      CHECK(v >= 0.0);
      CHECK(v <= at0);
    }
  }
  CHECK(weighted_density_kernel(1, 1, H, 8.0, 0.0) < 1e-6 * at0);
  // pairing against 2 delta_0 x 2 delta_0 gives the sgn trace term over alpha_H
  const auto r = cross_covariance(GFunction::sign(), GFunction::sign(), 1, 1, H);
  CHECK(4 * at0 == doctest::Approx(r.trace_term / alpha_h(H)).epsilon(1e-5));
}

TEST_CASE("finiteness and scaling") {
  for (double h : {0.6, 0.75}) {
    const HurstParameter H(h);
    const auto one = finiteness_check(H, 1.0);
    CHECK(std::isfinite(one.value));
    CHECK(one.rel_change < 0.01);
    const auto two = finiteness_check(H, 2.0);
    CHECK(two.value == doctest::Approx(std::pow(2.0, 2 * h) * one.value).epsilon(0.01));
  }
}

}
