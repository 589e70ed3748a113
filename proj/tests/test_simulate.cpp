#include "fbmxcov/simulate.hpp"
#include "fbmxcov/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace fbmxcov;

namespace {

struct Moments {
  double mean;
  double cov;
  double cov_se;
};

// Sample mean of column a and covariance of columns a, b with its standard error.
Moments moments(const PathEnsemble& e, std::size_t a, std::size_t b) {
  const double n = static_cast<double>(e.n_paths());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < e.n_paths(); ++i) ma += e.paths(i, a), mb += e.paths(i, b);
  ma /= n, mb /= n;
  double c = 0, c2 = 0;
  for (std::size_t i = 0; i < e.n_paths(); ++i) {
    const double p = (e.paths(i, a) - ma) * (e.paths(i, b) - mb);
    c += p, c2 += p * p;
  }
  c /= n;
  return {ma, c, std::sqrt((c2 / n - c * c) / n)};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fbmxcov_test_" + name);
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("philox known answers") {
  using rng::philox4x32_10;
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == rng::PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        rng::PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        rng::PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("philox streams") {
  rng::PhiloxStream a(5, 7), b(5, 7), c(5, 8);
  double sum = 0, sq = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = a.next_uniform();
    CHECK(u == b.next_uniform());
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    const double z = c.next_normal();
    sum += z, sq += z * z;
  }
  CHECK(std::abs(sum / 1e5) < 4 / std::sqrt(1e5));
  CHECK(std::abs(sq / 1e5 - 1) < 4 * std::sqrt(2 / 1e5));
}

TEST_CASE("cholesky ensemble law") {
  const HurstParameter H(0.75);
  const auto g = TimeGrid::uniform(1.0, 64);
  const auto e = generate_cholesky(g, H, Seed{1}, 100000);
  CHECK(e.paths.col(0).cwiseAbs().maxCoeff() == 0.0);
  const auto m = moments(e, 64, 64);
  CHECK(std::abs(m.cov - 1.0) < 4 * std::sqrt(2.0 / 1e5));
  for (auto [a, b] : {std::pair{16, 48}, {32, 64}, {8, 8}}) {
    const auto mm = moments(e, a, b);
    CHECK(std::abs(mm.cov - oracle::rh(a / 64.0, b / 64.0, 0.75)) < 4 * mm.cov_se);
  }
  const auto again = generate_cholesky(g, H, Seed{1}, 3);
  CHECK(again.paths.row(0) == e.paths.row(0));
}

TEST_CASE("brownian increments are uncorrelated") {
  const auto g = TimeGrid::uniform(1.0, 32);
  const auto e = generate_cholesky(g, HurstParameter::limit_study(0.5), Seed{2}, 100000);
  double c = 0, c2 = 0;
  const double n = static_cast<double>(e.n_paths());
  for (std::size_t i = 0; i < e.n_paths(); ++i) {
    const double p = (e.paths(i, 10) - e.paths(i, 5)) * (e.paths(i, 30) - e.paths(i, 20));
    c += p, c2 += p * p;
  }
  c /= n;
  CHECK(std::abs(c) < 4 * std::sqrt((c2 / n - c * c) / n));
}

TEST_CASE("circulant matches cholesky in law") {
  const HurstParameter H(0.65);
  const auto g = TimeGrid::uniform(2.0, 64);
  const auto a = generate_cholesky(g, H, Seed{3}, 100000);
  const auto b = generate_circulant(g, H, Seed{4}, 100000);
  CHECK(b.paths.col(0).cwiseAbs().maxCoeff() == 0.0);
  for (auto [i, j] : {std::pair{16, 16}, {32, 64}, {48, 64}, {64, 64}}) {
    const auto ma = moments(a, i, j), mb = moments(b, i, j);
    const double mean_se = std::sqrt(ma.cov / 1e5 + mb.cov / 1e5);
    CHECK(std::abs(ma.mean - mb.mean) < 4 * std::sqrt(oracle::rh(i / 32.0, i / 32.0, 0.65) * 2 / 1e5));
    CHECK(std::abs(ma.cov - mb.cov) < 4 * std::hypot(ma.cov_se, mb.cov_se));
    CHECK(std::abs(mb.cov - oracle::rh(i / 32.0, j / 32.0, 0.65)) < 4 * mb.cov_se);
    (void)mean_se;
  }
}

TEST_CASE("ensembles do not depend on the thread count") {
  const auto g = TimeGrid::uniform(1.0, 128);
  const HurstParameter H(0.7);
  for (auto gen : {Generator::cholesky, Generator::circulant}) {
    const auto sampler = make_sampler(gen, g, H, Seed{77});
    const auto one = generate(*sampler, 1000, 1);
    const auto four = generate(*sampler, 1000, 4);
    CHECK(one.paths == four.paths);
  }
}

TEST_CASE("circulant scales to long grids") {
  const auto g = TimeGrid::uniform(1.0, 1 << 14);
  const auto e = generate_circulant(g, HurstParameter(0.8), Seed{5}, 4);
  CHECK(e.paths.cols() == (1 << 14) + 1);
  CHECK(std::isfinite(e.paths.sum()));
  CHECK_THROWS(make_cholesky_sampler(TimeGrid::uniform(1.0, 8192), HurstParameter(0.8), Seed{5}));
}

TEST_CASE("young integral") {
  const auto g = TimeGrid::uniform(1.0, 512);
  const auto sampler = make_circulant_sampler(g, HurstParameter(0.75), Seed{6});
  std::vector<double> path(513);
  sampler->sample(0, path);
  CHECK(young_integral(GFunction::constant(2.5), g, path, 0.5) == doctest::Approx(2.5 * path[256]).epsilon(1e-12));
  std::vector<double> positive(513);
  for (int i = 0; i < 513; ++i) positive[i] = 0.1 + std::abs(std::sin(i * 0.01));
  CHECK(young_integral(GFunction::sign(), g, positive, 1.0) == doctest::Approx(positive[512] - positive[0]));
  // F = id approaches B_t^2 / 2 as the grid is refined
  double prev = 1e300;
  for (std::size_t n : {32u, 128u, 512u}) {
    const auto gc = TimeGrid::uniform(1.0, n);
    std::vector<double> coarse(n + 1);
    for (std::size_t i = 0; i <= n; ++i) coarse[i] = path[i * (512 / n)];
    const double dev = std::abs(young_integral(GFunction::identity(), gc, coarse, 1.0) - 0.5 * path[512] * path[512]);
    CHECK(dev < prev);
    prev = dev;
  }
}

TEST_CASE("divergence integral") {
  const HurstParameter H(0.7);
  const auto g = TimeGrid::uniform(1.0, 512);
  const auto sampler = make_circulant_sampler(g, H, Seed{8});
  std::vector<double> path(513);
  sampler->sample(0, path);
  const auto c = divergence_integral(GFunction::constant(3), g, path, 1.0, H);
  CHECK(c.correction_part == 0.0);
  CHECK(c.value == doctest::Approx(3 * path[512]));
  const auto d = divergence_integral(GFunction::sine(), g, path, 0.75, H);
  CHECK(d.value == d.young_part - d.correction_part);
  CHECK_THROWS(divergence_integral(GFunction::sign(), g, path, 1.0, H));
  CHECK_THROWS(divergence_integral(GFunction::identity(), g, path, 1.0, HurstParameter::limit_study(0.5)));

  // identity: per-path deviation from (B_t^2 - t^2H) / 2 shrinks under refinement
  double prev = 1e300;
  for (std::size_t n : {128u, 256u, 512u}) {
    double worst = 0.0;
    const auto gc = TimeGrid::uniform(1.0, n);
    for (std::size_t p = 0; p < 20; ++p) {
      sampler->sample(p, path);
      std::vector<double> coarse(n + 1);
      for (std::size_t i = 0; i <= n; ++i) coarse[i] = path[i * (512 / n)];
      const double v = divergence_integral(GFunction::identity(), gc, coarse, 1.0, H).value;
      worst = std::max(worst, std::abs(v - 0.5 * (path[512] * path[512] - 1.0)));
    }
    CHECK(worst < prev);
    prev = worst;
  }
}

TEST_CASE("divergence integrals are centered") {
  const HurstParameter H(0.7);
  const auto g = TimeGrid::uniform(1.0, 256);
  const auto e = generate_circulant(g, H, Seed{9}, 20000);
  for (const auto& F : {GFunction::tanh(), GFunction::identity(), mollify(GFunction::sign(), 8)}) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < e.n_paths(); ++i) {
      const double v = divergence_integral(F, g, e.path(i), 1.0, H).value;
      s += v, s2 += v * v;
    }
    const double n = static_cast<double>(e.n_paths());
    const double mean = s / n;
    CHECK(std::abs(mean) < 4 * std::sqrt((s2 / n - mean * mean) / n));
  }
}

TEST_CASE("monte carlo cross covariance examples") {
  const HurstParameter H(0.75);
  EnsembleParams p;
  p.steps = 256;
  p.n_paths = 20000;
  p.seed = Seed{10};
  const auto c = mc_cross_covariance(GFunction::constant(1), GFunction::constant(1), 1, 1, H, p);
  CHECK(std::abs(c.estimate - 1.0) < 4 * c.std_error);
  CHECK(c.n_paths == 20000);
  const auto id = mc_cross_covariance(GFunction::identity(), GFunction::identity(), 2, 1, H, p);
  CHECK(std::abs(id.estimate - 1.0) < 4 * id.std_error);
  // the streamed estimate equals the one from a stored ensemble
  p.horizon = 2.0;
  const auto streamed = mc_cross_covariance(GFunction::tanh(), GFunction::sine(), 2, 1, H, p);
  const auto e = generate_circulant(TimeGrid::uniform(2.0, 256), H, Seed{10}, 20000);
  const auto stored = mc_cross_covariance(GFunction::tanh(), GFunction::sine(), 2, 1, e);
  CHECK(streamed.estimate == doctest::Approx(stored.estimate).epsilon(1e-12));
}

TEST_CASE("mollified report structure") {
  EnsembleParams p;
  p.steps = 128;
  p.n_paths = 2000;
  p.seed = Seed{11};
  const HurstParameter H(0.75);
  const auto r = mc_mollified(GFunction::sign(), GFunction::sign(), 1, 1, H, p);
  REQUIRE(r.levels.size() == 3);
  CHECK(r.rate == doctest::Approx(1.0 / 3.0));
  CHECK(r.observed_order.has_value());
  CHECK(r.extrapolated.std_error > 0.0);
  CHECK(mollification_rate(HurstParameter(0.6)) == doctest::Approx(0.4 / 0.6));
}

TEST_CASE("ensemble files") {
  const auto e = generate_cholesky(TimeGrid::uniform(1.5, 16), HurstParameter(0.7), Seed{12}, 5);
  const auto file = temp_path("ens.fbme");
  write_ensemble(file, e);
  {
    std::ifstream in(file, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::string(magic, 4) == "FBME");
    CHECK(std::filesystem::file_size(file) == 4 + 2 + 8 + 4 + 4 + 8 + 5 * 17 * 8);
  }
  const auto back = read_ensemble(file, 1.5);
  CHECK(back.paths == e.paths);
  CHECK(back.H.value() == 0.7);
  CHECK(back.seed.root == 12);
  CHECK(back.generator == Generator::external);
  CHECK(back.grid == e.grid);
  const auto csv = temp_path("ens.csv");
  write_ensemble_csv(csv, e);
  std::ifstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 6);
  std::ofstream(file, std::ios::binary) << "FBMX";
  CHECK_THROWS(read_ensemble(file));
  std::filesystem::remove(file);
  std::filesystem::remove(csv);
}

}
