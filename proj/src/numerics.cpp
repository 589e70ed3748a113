#include "fbmxcov/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace fbmxcov::numerics {

namespace {

QuadratureRule build_gauss_legendre(int n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = n == 1 ? x : p1;
      const double pnm1 = n == 1 ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) {
        break;
      }
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n == 1 ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) {
    rule.nodes[n / 2] = 0.0;
  }
  return rule;
}

// Golub-Welsch for the probabilists' Hermite polynomials.
QuadratureRule build_gauss_hermite(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double v = solver.eigenvectors()(0, i);
    rule.weights[i] = v * v;
  }
  // symmetrize to remove eigen-solver noise
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (n % 2 == 1) {
    rule.nodes[n / 2] = 0.0;
  }
  double total = 0.0;
  for (double w : rule.weights) {
    total += w;
  }
  for (double& w : rule.weights) {
    w /= total;
  }
  return rule;
}

template <class Builder>
const QuadratureRule& cached_rule(int order, std::map<int, std::unique_ptr<QuadratureRule>>& cache,
                                  std::mutex& mutex, Builder build) {
  if (order < 1 || order > 1024) {
    throw std::invalid_argument("quadrature order must be in [1, 1024]");
  }
  std::lock_guard lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) {
    it = cache.emplace(order, std::make_unique<QuadratureRule>(build(order))).first;
  }
  return *it->second;
}

constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double value;
  double error;
};

Segment kronrod15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    const double s = f(c - dx) + f(c + dx);
    kron += kWgk[j] * s;
    if (j % 2 == 1) {
      gauss += kWg[j / 2] * s;
    }
  }
  return {kron * h, std::abs((kron - gauss) * h)};
}

IntegrationResult adapt(const std::function<double(double)>& f, double a, double b, double abs_tol,
                        double rel_tol, int depth, const Segment& whole) {
  const double mid = 0.5 * (a + b);
  const Segment left = kronrod15(f, a, mid);
  const Segment right = kronrod15(f, mid, b);
  const double value = left.value + right.value;
  const double error = left.error + right.error;
  const double tol = std::max(abs_tol, rel_tol * std::abs(value));
  if (error <= tol || std::abs(value - whole.value) <= 1e-3 * tol) {
    return {value, error, true};
  }
  if (depth <= 0 || mid <= a || mid >= b) {
    return {value, error, false};
  }
  const IntegrationResult l = adapt(f, a, mid, 0.5 * abs_tol, rel_tol, depth - 1, left);
  const IntegrationResult r = adapt(f, mid, b, 0.5 * abs_tol, rel_tol, depth - 1, right);
  return {l.value + r.value, l.abs_error + r.abs_error, l.converged && r.converged};
}

}  // namespace

const QuadratureRule& gauss_legendre(int order) {
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex mutex;
  return cached_rule(order, cache, mutex, build_gauss_legendre);
}

const QuadratureRule& gauss_hermite(int order) {
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex mutex;
  return cached_rule(order, cache, mutex, build_gauss_hermite);
}

GradedRule graded_rule(int cells, int nodes_per_cell, double grade_low, double grade_high) {
  if (cells < 1 || nodes_per_cell < 1) {
    throw std::invalid_argument("graded_rule: cells and nodes_per_cell must be positive");
  }
  if (!(grade_low >= 1.0) || !(grade_high >= 1.0)) {
    throw std::invalid_argument("graded_rule: grading exponents must be >= 1");
  }
  const QuadratureRule& gl = gauss_legendre(nodes_per_cell);
  GradedRule out;
  // Uniform cells in v on (0, 1); maps to x through the grading power.
  auto emit_half = [&](int n_cells, double q, double scale, bool from_high) {
    for (int c = 0; c < n_cells; ++c) {
      const double v0 = static_cast<double>(c) / n_cells;
      const double hv = 1.0 / n_cells;
      for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
        const double v = v0 + 0.5 * hv * (gl.nodes[k] + 1.0);
        const double wv = 0.5 * hv * gl.weights[k];
        const double d = scale * std::pow(v, q);  // distance from the graded end
        const double w = scale * q * std::pow(v, q - 1.0) * wv;
        if (from_high) {
          out.nodes.push_back(1.0 - d);
          out.complements.push_back(d);
        } else {
          out.nodes.push_back(d);
          out.complements.push_back(1.0 - d);
        }
        out.weights.push_back(w);
      }
    }
  };
  if (grade_low > 1.0 && grade_high > 1.0) {
    const int half = std::max(1, cells / 2);
    emit_half(half, grade_low, 0.5, false);
    emit_half(half, grade_high, 0.5, true);
  } else if (grade_high > 1.0) {
    emit_half(cells, grade_high, 1.0, true);
  } else {
    emit_half(cells, grade_low, 1.0, false);
  }
  return out;
}

double normal_pdf(double z) { return 0.39894228040143267794 * std::exp(-0.5 * z * z); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440); }

double normal_sf(double z) { return 0.5 * std::erfc(z * 0.70710678118654752440); }

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 16;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) {
      s += v;
    }
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

IntegrationResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                     double abs_tol, double rel_tol, int max_depth) {
  if (a == b) {
    return {0.0, 0.0, true};
  }
  if (a > b) {
    IntegrationResult r = integrate_adaptive(f, b, a, abs_tol, rel_tol, max_depth);
    r.value = -r.value;
    return r;
  }
  const Segment whole = kronrod15(f, a, b);
  if (whole.error <= std::max(abs_tol, rel_tol * std::abs(whole.value))) {
    return {whole.value, whole.error, true};
  }
  return adapt(f, a, b, abs_tol, rel_tol, max_depth, whole);
}

IntegrationResult integrate_real_line(const std::function<double(double)>& f, double abs_tol,
                                      double rel_tol) {
  auto mapped = [&f](double u) {
    const double d = 1.0 - u * u;
    const double x = u / d;
    return f(x) * (1.0 + u * u) / (d * d);
  };
  // Split at 0 so each half is adapted independently.
  const IntegrationResult l = integrate_adaptive(mapped, -1.0, 0.0, 0.5 * abs_tol, rel_tol);
  const IntegrationResult r = integrate_adaptive(mapped, 0.0, 1.0, 0.5 * abs_tol, rel_tol);
  return {l.value + r.value, l.abs_error + r.abs_error, l.converged && r.converged};
}

double half_line_normal_integral(const std::function<double(double)>& g, double lower,
                                 int hermite_order) {
  if (lower <= -8.5) {
    const QuadratureRule& gh = gauss_hermite(hermite_order);
    double s = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      s += gh.weights[i] * g(gh.nodes[i]);
    }
    return s;
  }
  if (lower >= 38.0) {
    return 0.0;
  }
  // phi decays like exp(-lower * v) beyond the lower limit, so panels shrink as
  // the limit moves into the upper tail.
  const double upper = lower <= 0.0 ? 9.0 : lower + std::min(9.0, 40.0 / lower);
  const double width = lower <= 1.0 ? 0.5 : 0.5 / lower;
  const int panels = static_cast<int>(std::ceil((upper - lower) / width));
  const double h = (upper - lower) / panels;
  const QuadratureRule& gl = gauss_legendre(10);
  std::vector<double> parts(panels);
  for (int p = 0; p < panels; ++p) {
    const double a = lower + p * h;
    double s = 0.0;
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      const double w = a + 0.5 * h * (gl.nodes[k] + 1.0);
      s += gl.weights[k] * normal_pdf(w) * g(w);
    }
    parts[p] = 0.5 * h * s;
  }
  return pairwise_sum(parts);
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) {
    return requested;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) {
        return;
      }
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) {
    pool.emplace_back(run);
  }
  run();
  for (auto& t : pool) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

}  // namespace fbmxcov::numerics
