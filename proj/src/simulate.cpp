#include "fbmxcov/simulate.hpp"

#include "fbmxcov/errors.hpp"
#include "fbmxcov/io.hpp"
#include "fbmxcov/numerics.hpp"
#include "fbmxcov/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <type_traits>
#include <utility>

namespace fbmxcov {

namespace {

constexpr std::size_t kBlock = 256;
constexpr std::uint16_t kFileVersion = 1;

void require_uniform(const TimeGrid& grid) {
  if (!grid.is_uniform()) {
    throw std::invalid_argument("path generation needs a uniform grid");
  }
}

std::size_t node_of(const TimeGrid& grid, double t, const char* what) {
  const auto i = grid.node_index(t);
  if (!i) {
    throw std::invalid_argument(std::string(what) + ": t = " + std::to_string(t) + " is not a grid node");
  }
  return *i;
}

void check_path(const TimeGrid& grid, std::span<const double> path) {
  if (path.size() != grid.nodes().size()) {
    throw GridMismatchError("path has " + std::to_string(path.size()) + " values for " +
                            std::to_string(grid.nodes().size()) + " grid nodes");
  }
}

class CholeskySampler final : public PathSampler {
 public:
  CholeskySampler(const TimeGrid& grid, const HurstParameter& H, Seed seed)
      : PathSampler(grid, H, seed), factor_(factor_for(grid, H)) {}

  void sample(std::size_t path_index, std::span<double> out) const override {
    const auto n = factor_->rows();
    rng::PhiloxStream stream(seed_.root, path_index);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      z[i] = stream.next_normal();
    }
    const Eigen::VectorXd b = factor_->triangularView<Eigen::Lower>() * z;
    out[0] = 0.0;
    std::copy(b.data(), b.data() + n, out.begin() + 1);
  }

  Generator generator() const override { return Generator::cholesky; }

 private:
  using Factor = std::shared_ptr<const Eigen::MatrixXd>;

  static Factor factor_for(const TimeGrid& grid, const HurstParameter& H) {
    const std::size_t n = grid.cells();
    if (n > 4096) {
      throw std::invalid_argument("Cholesky generation is limited to 4096 cells, got " + std::to_string(n));
    }
    static std::mutex mutex;
    static std::map<std::pair<double, std::vector<double>>, Factor> cache;
    auto key = std::make_pair(H.value(), std::vector<double>(grid.nodes().begin(), grid.nodes().end()));
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) {
      return it->second;
    }
    Eigen::MatrixXd C(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        C(i, j) = C(j, i) = covariance_rh(grid.node(i + 1), grid.node(j + 1), H);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) {
      const double smallest = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(C, Eigen::EigenvaluesOnly)
                                  .eigenvalues()
                                  .minCoeff();
      throw std::runtime_error("Cholesky factorization of the fBm covariance failed; smallest eigenvalue " +
                               std::to_string(smallest));
    }
    auto f = std::make_shared<const Eigen::MatrixXd>(llt.matrixL());
    cache.emplace(std::move(key), f);
    return f;
  }

  Factor factor_;
};

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class CirculantSampler final : public PathSampler {
 public:
  CirculantSampler(const TimeGrid& grid, const HurstParameter& H, Seed seed) : PathSampler(grid, H, seed) {
    const std::size_t n = grid.cells();
    m_ = 2 * n;
    const double dt = grid.horizon() / static_cast<double>(n);
    const double scale = 0.5 * std::pow(dt, H.two_h());
    auto lag = [&](double k) {
      return scale * (std::pow(k + 1.0, H.two_h()) - 2.0 * std::pow(k, H.two_h()) +
                      std::pow(std::abs(k - 1.0), H.two_h()));
    };
    std::vector<std::complex<double>> row(m_), eig(m_);
    for (std::size_t k = 0; k <= n; ++k) {
      row[k] = lag(static_cast<double>(k));
    }
    for (std::size_t k = n + 1; k < m_; ++k) {
      row[k] = row[m_ - k];
    }
    {
      std::lock_guard lock(fftw_planner_mutex());
      plan_ = fftw_plan_dft_1d(static_cast<int>(m_), reinterpret_cast<fftw_complex*>(row.data()),
                               reinterpret_cast<fftw_complex*>(eig.data()), FFTW_FORWARD,
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    if (plan_ == nullptr) {
      throw std::runtime_error("FFTW planning failed");
    }
    fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(row.data()),
                     reinterpret_cast<fftw_complex*>(eig.data()));
    double largest = 0.0;
    for (const auto& e : eig) {
      largest = std::max(largest, e.real());
    }
    sqrt_eig_.resize(m_);
    double most_negative = 0.0;
    for (std::size_t k = 0; k < m_; ++k) {
      double lam = eig[k].real();
      if (lam < 0.0) {
        most_negative = std::min(most_negative, lam);
        if (lam < -1e-9 * std::max(largest, 1.0)) {
          throw std::runtime_error("circulant embedding has eigenvalue " + std::to_string(lam) +
                                   "; the embedding is not non-negative definite");
        }
        lam = 0.0;
      }
      sqrt_eig_[k] = std::sqrt(lam / static_cast<double>(m_));
    }
    if (most_negative < 0.0) {
      std::cerr << "fbmxcov: warning: clamped circulant eigenvalues down to " << most_negative << " to zero\n";
    }
  }

  ~CirculantSampler() override {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }

  CirculantSampler(const CirculantSampler&) = delete;
  CirculantSampler& operator=(const CirculantSampler&) = delete;

  void sample(std::size_t path_index, std::span<double> out) const override {
    thread_local std::vector<std::complex<double>> in, res;
    in.resize(m_);
    res.resize(m_);
    rng::PhiloxStream stream(seed_.root, path_index);
    for (std::size_t k = 0; k < m_; ++k) {
      const double a = stream.next_normal();
      const double b = stream.next_normal();
      in[k] = sqrt_eig_[k] * std::complex<double>(a, b);
    }
    fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(res.data()));
    const std::size_t n = m_ / 2;
    out[0] = 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += res[k].real();
      out[k + 1] = acc;
    }
  }

  Generator generator() const override { return Generator::circulant; }

 private:
  std::size_t m_;
  std::vector<double> sqrt_eig_;
  fftw_plan plan_ = nullptr;
};

// Per-path products X_t Y_s for every requested (F, G) pair, laid out path-major.
template <typename Fn>
std::vector<double> per_path_values(std::size_t n_paths, std::size_t width, unsigned threads, Fn&& fn) {
  std::vector<double> values(n_paths * width);
  const std::size_t blocks = (n_paths + kBlock - 1) / kBlock;
  numerics::parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(n_paths, lo + kBlock);
    for (std::size_t i = lo; i < hi; ++i) {
      fn(i, std::span<double>(values.data() + i * width, width));
    }
  });
  return values;
}

McEstimate mean_and_stderr(std::vector<double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) {
    throw std::invalid_argument("Monte Carlo needs at least two paths");
  }
  const double mean = numerics::pairwise_sum(samples) / static_cast<double>(n);
  for (auto& v : samples) {
    v = (v - mean) * (v - mean);
  }
  const double var = numerics::pairwise_sum(samples) / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n)), n};
}

std::vector<double> column(const std::vector<double>& values, std::size_t width, std::size_t col) {
  std::vector<double> out(values.size() / width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = values[i * width + col];
  }
  return out;
}

TimeGrid mc_grid(double t, double s, const EnsembleParams& params) {
  if (!(t > 0.0) || !(s > 0.0)) {
    throw std::invalid_argument("Monte Carlo times must be positive");
  }
  const double T = params.horizon.value_or(std::max(t, s));
  if (params.steps < 1) {
    throw std::invalid_argument("Monte Carlo needs at least one step");
  }
  return TimeGrid::uniform(T, params.steps);
}

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) {
    static_assert(sizeof(T) == 8);
    std::memcpy(&bits, &v, 8);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("ensemble file is truncated");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  if constexpr (std::is_floating_point_v<T>) {
    T v;
    std::memcpy(&v, &bits, 8);
    return v;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

std::string to_string(Generator g) {
  switch (g) {
    case Generator::cholesky:
      return "cholesky";
    case Generator::circulant:
      return "circulant";
    case Generator::external:
      return "external";
  }
  return "unknown";
}

Generator generator_from_string(const std::string& name) {
  if (name == "cholesky") return Generator::cholesky;
  if (name == "circulant") return Generator::circulant;
  throw std::invalid_argument("unknown generator '" + name + "' (expected cholesky or circulant)");
}

PathSampler::PathSampler(TimeGrid grid, HurstParameter H, Seed seed)
    : grid_(std::move(grid)), H_(H), seed_(seed) {
  require_uniform(grid_);
}

std::unique_ptr<PathSampler> make_cholesky_sampler(const TimeGrid& grid, const HurstParameter& H, Seed seed) {
  return std::make_unique<CholeskySampler>(grid, H, seed);
}

std::unique_ptr<PathSampler> make_circulant_sampler(const TimeGrid& grid, const HurstParameter& H, Seed seed) {
  return std::make_unique<CirculantSampler>(grid, H, seed);
}

std::unique_ptr<PathSampler> make_sampler(Generator g, const TimeGrid& grid, const HurstParameter& H, Seed seed) {
  switch (g) {
    case Generator::cholesky:
      return make_cholesky_sampler(grid, H, seed);
    case Generator::circulant:
      return make_circulant_sampler(grid, H, seed);
    case Generator::external:
      break;
  }
  throw std::invalid_argument("cannot sample from an external ensemble");
}

PathEnsemble generate(const PathSampler& sampler, std::size_t n_paths, unsigned threads) {
  const auto width = static_cast<Eigen::Index>(sampler.grid().nodes().size());
  PathMatrix paths(static_cast<Eigen::Index>(n_paths), width);
  const std::size_t blocks = (n_paths + kBlock - 1) / kBlock;
  numerics::parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t hi = std::min(n_paths, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < hi; ++i) {
      sampler.sample(i, std::span<double>(paths.data() + i * static_cast<std::size_t>(width),
                                          static_cast<std::size_t>(width)));
    }
  });
  return PathEnsemble{sampler.grid(), sampler.hurst(), std::move(paths), sampler.seed(), sampler.generator()};
}

PathEnsemble generate_cholesky(const TimeGrid& grid, const HurstParameter& H, Seed seed, std::size_t n_paths,
                               unsigned threads) {
  return generate(*make_cholesky_sampler(grid, H, seed), n_paths, threads);
}

PathEnsemble generate_circulant(const TimeGrid& grid, const HurstParameter& H, Seed seed, std::size_t n_paths,
                                unsigned threads) {
  return generate(*make_circulant_sampler(grid, H, seed), n_paths, threads);
}

double young_integral(const GFunction& F, const TimeGrid& grid, std::span<const double> path, double t) {
  check_path(grid, path);
  const std::size_t m = node_of(grid, t, "young_integral");
  double sum = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    sum += F(path[k]) * (path[k + 1] - path[k]);
  }
  return sum;
}

DivergenceSample divergence_integral(const GFunction& F, const TimeGrid& grid, std::span<const double> path,
                                     double t, const HurstParameter& H) {
  if (!F.jumps().empty()) {
    throw std::invalid_argument("divergence_integral: '" + F.label() +
                                "' has jumps; its correction would need local time, mollify it first");
  }
  if (H.is_brownian()) {
    throw std::invalid_argument("divergence_integral needs H > 1/2");
  }
  check_path(grid, path);
  const std::size_t m = node_of(grid, t, "divergence_integral");
  const auto nodes = grid.nodes();
  const double p = H.two_h();
  double young = 0.0;
  double corr = 0.0;
  const bool has_derivative = F.has_ac_part();
  for (std::size_t k = 0; k < m; ++k) {
    const double b = path[k];
    young += F(b) * (path[k + 1] - b);
    if (has_derivative && k > 0) {
      // <1[0, tk], 1[tk, tk+1]>
      const double w = 0.5 * (std::pow(nodes[k + 1], p) - std::pow(nodes[k], p) -
                              std::pow(nodes[k + 1] - nodes[k], p));
      corr += F.ac_derivative(b) * w;
    }
  }
  return {young, corr, young - corr};
}

McEstimate mc_cross_covariance(const GFunction& F, const GFunction& G, double t, double s,
                               const HurstParameter& H, const EnsembleParams& params) {
  const TimeGrid grid = mc_grid(t, s, params);
  node_of(grid, t, "mc_cross_covariance");
  node_of(grid, s, "mc_cross_covariance");
  const auto sampler = make_sampler(params.generator, grid, H, params.seed);
  const std::size_t width = grid.nodes().size();
  auto values = per_path_values(params.n_paths, 1, params.threads, [&](std::size_t i, std::span<double> out) {
    thread_local std::vector<double> path;
    path.resize(width);
    sampler->sample(i, path);
    out[0] = divergence_integral(F, grid, path, t, H).value * divergence_integral(G, grid, path, s, H).value;
  });
  return mean_and_stderr(std::move(values));
}

McEstimate mc_cross_covariance(const GFunction& F, const GFunction& G, double t, double s,
                               const PathEnsemble& ensemble, unsigned threads) {
  auto values = per_path_values(ensemble.n_paths(), 1, threads, [&](std::size_t i, std::span<double> out) {
    const auto path = ensemble.path(i);
    out[0] = divergence_integral(F, ensemble.grid, path, t, ensemble.H).value *
             divergence_integral(G, ensemble.grid, path, s, ensemble.H).value;
  });
  return mean_and_stderr(std::move(values));
}

MollifiedMcReport mc_mollified(const GFunction& F, const GFunction& G, double t, double s,
                               const HurstParameter& H, const EnsembleParams& params,
                               const std::vector<int>& levels, std::optional<double> rate) {
  const double p = rate.value_or(mollification_rate(H));
  if (!(p > 0.0)) {
    throw std::invalid_argument("mc_mollified: extrapolation rate must be positive");
  }
  if (levels.size() < 2) {
    throw std::invalid_argument("mc_mollified needs at least two mollification levels");
  }
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (levels[i] <= levels[i - 1]) {
      throw std::invalid_argument("mollification levels must increase");
    }
  }
  std::vector<GFunction> fs, gs;
  for (int n : levels) {
    fs.push_back(mollify(F, n));
    gs.push_back(mollify(G, n));
  }
  const TimeGrid grid = mc_grid(t, s, params);
  node_of(grid, t, "mc_mollified");
  node_of(grid, s, "mc_mollified");
  const auto sampler = make_sampler(params.generator, grid, H, params.seed);
  const std::size_t L = levels.size();
  const std::size_t width = grid.nodes().size();
  const double r = static_cast<double>(levels[L - 1]) / levels[L - 2];
  const double gain = 1.0 / (std::pow(r, p) - 1.0);
  auto values = per_path_values(params.n_paths, L + 1, params.threads, [&](std::size_t i, std::span<double> out) {
    thread_local std::vector<double> path;
    path.resize(width);
    sampler->sample(i, path);
    for (std::size_t l = 0; l < L; ++l) {
      out[l] = divergence_integral(fs[l], grid, path, t, H).value * divergence_integral(gs[l], grid, path, s, H).value;
    }
    out[L] = out[L - 1] + gain * (out[L - 1] - out[L - 2]);
  });
  MollifiedMcReport report;
  for (std::size_t l = 0; l < L; ++l) {
    report.levels.push_back({levels[l], mean_and_stderr(column(values, L + 1, l))});
  }
  report.extrapolated = mean_and_stderr(column(values, L + 1, L));
  report.rate = p;
  if (L >= 3) {
    const double g1 = std::abs(report.levels[L - 2].mc.estimate - report.levels[L - 3].mc.estimate);
    const double g2 = std::abs(report.levels[L - 1].mc.estimate - report.levels[L - 2].mc.estimate);
    const double r1 = static_cast<double>(levels[L - 2]) / levels[L - 3];
    if (g1 > 0.0 && g2 > 0.0 && r1 == r) {
      report.observed_order = std::log(g1 / g2) / std::log(r);
    }
  }
  return report;
}

double mollification_rate(const HurstParameter& H) {
  return (1.0 - H.value()) / H.value();
}

void write_ensemble(const std::filesystem::path& file, const PathEnsemble& ensemble) {
  io::atomic_write(
      file,
      [&](std::ostream& out) {
        out.write("FBME", 4);
        put_le<std::uint16_t>(out, kFileVersion);
        put_le<double>(out, ensemble.H.value());
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ensemble.grid.cells()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ensemble.n_paths()));
        put_le<std::uint64_t>(out, ensemble.seed.root);
        const auto* data = ensemble.paths.data();
        for (Eigen::Index i = 0; i < ensemble.paths.size(); ++i) {
          put_le<double>(out, data[i]);
        }
      },
      true);
}

PathEnsemble read_ensemble(const std::filesystem::path& file, double horizon) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open ensemble file " + file.string());
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FBME", 4) != 0) {
    throw std::runtime_error(file.string() + " is not an FBME ensemble file");
  }
  const auto version = get_le<std::uint16_t>(in);
  if (version != kFileVersion) {
    throw std::runtime_error("unsupported FBME version " + std::to_string(version));
  }
  const double h = get_le<double>(in);
  const auto n = get_le<std::uint32_t>(in);
  const auto n_paths = get_le<std::uint32_t>(in);
  const auto root = get_le<std::uint64_t>(in);
  PathMatrix paths(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(n) + 1);
  auto* data = paths.data();
  for (Eigen::Index i = 0; i < paths.size(); ++i) {
    data[i] = get_le<double>(in);
  }
  return PathEnsemble{TimeGrid::uniform(horizon, n), HurstParameter::limit_study(h), std::move(paths), Seed{root},
                      Generator::external};
}

void write_ensemble_csv(const std::filesystem::path& file, const PathEnsemble& ensemble) {
  io::atomic_write(file, [&](std::ostream& out) {
    out.precision(17);
    const auto nodes = ensemble.grid.nodes();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      out << (k ? "," : "") << nodes[k];
    }
    out << '\n';
    for (std::size_t i = 0; i < ensemble.n_paths(); ++i) {
      const auto p = ensemble.path(i);
      for (std::size_t k = 0; k < p.size(); ++k) {
        out << (k ? "," : "") << p[k];
      }
      out << '\n';
    }
  });
}

}  // namespace fbmxcov
