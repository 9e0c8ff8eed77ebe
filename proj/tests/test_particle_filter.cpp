#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <random>

#include "argpois/errors.hpp"
#include "argpois/particle_filter.hpp"
#include "fixtures.hpp"
#include "grid_filter.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace argpois;

namespace {


}  // namespace

TEST_CASE("local filter agrees with the grid-HMM filter") {
  const auto inst = testing::local_instance(40, 5);
  const auto& sp = inst.theta.series[0];
  auto log_obs = [&](std::size_t t, double x) {
    const double amp = 1.0 + sp.xi[static_cast<std::size_t>(inst.paths.s[0][t])];
    return testing::log_poisson(static_cast<double>(inst.panel.y[0][t]), inst.paths.w[t] + amp * x);
  };
  const auto oracle = testing::grid_filter(sp.arg.alpha, sp.arg.beta, sp.arg.delta, 40, log_obs, 25.0);

  pf::FilterConfig cfg;
  cfg.particles = 4000;
  Rng rng(21);
  const auto out = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, rng, cfg);
  for (std::size_t t = 0; t < 40; ++t) {
    const double se = out.filtered_sd[t] / std::sqrt(out.ess[t]);
    CAPTURE(t);
    CHECK(std::abs(out.filtered_mean[t] - oracle.mean[t]) < std::max(0.05, 3.0 * se));
  }
  // likelihood estimate is close to the exact normalizer of the discretized model
  CHECK(std::abs(out.loglik - oracle.log_normalizer) < 0.5);
}

TEST_CASE("global filter agrees with the grid-HMM filter") {
  const std::size_t T = 40;
  auto panel = testing::flat_panel(2, T, 0);
  auto theta = testing::two_regime_theta(2);
  theta.global.arg = {2.5, 1.2, 0.5};
  auto paths = testing::flat_paths(2, T, 1.0, 1.5);
  std::mt19937_64 gen(6);
  double w = std::gamma_distribution<double>(2.5, 0.5 / 0.4)(gen);
  for (std::size_t t = 0; t < T; ++t) {
    const int k = std::poisson_distribution<int>(1.2 * w)(gen);
    w = std::gamma_distribution<double>(2.5 + k, 0.5)(gen);
    paths.x[1][t] = 0.8 + 0.1 * static_cast<double>(t % 4);
    paths.s[0][t] = t % 9 == 0 ? 1 : 0;
    panel.z[t] = std::poisson_distribution<std::int64_t>(w)(gen);
    for (std::size_t j = 0; j < 2; ++j) {
      const double amp = 1.0 + theta.series[j].xi[static_cast<std::size_t>(paths.s[j][t])];
      panel.y[j][t] = std::poisson_distribution<std::int64_t>(w + paths.x[j][t] * amp)(gen);
    }
  }
  auto log_obs = [&](std::size_t t, double x) {
    double lw = testing::log_poisson(static_cast<double>(panel.z[t]), x);
    for (std::size_t j = 0; j < 2; ++j) {
      const double amp = 1.0 + theta.series[j].xi[static_cast<std::size_t>(paths.s[j][t])];
      lw += testing::log_poisson(static_cast<double>(panel.y[j][t]), x + paths.x[j][t] * amp);
    }
    return lw;
  };
  const auto oracle = testing::grid_filter(2.5, 1.2, 0.5, T, log_obs, 25.0);
  pf::FilterConfig cfg;
  cfg.particles = 4000;
  Rng rng(22);
  const auto out = pf::sm_filter_global(panel, theta, paths, rng, cfg);
  for (std::size_t t = 0; t < T; ++t) {
    const double se = out.filtered_sd[t] / std::sqrt(out.ess[t]);
    CAPTURE(t);
    CHECK(std::abs(out.filtered_mean[t] - oracle.mean[t]) < std::max(0.05, 3.0 * se));
  }
}

TEST_CASE("without observation weights the filter follows the prior") {
  const ArgParams arg{2.0, 0.9, 0.6};
  pf::AffinePoissonObs obs(30, 1);
  for (std::size_t t = 0; t < 30; ++t) obs.set(t, 0, 5, 0.0, 1.0);
  pf::FilterConfig cfg;
  cfg.particles = 20000;
  cfg.prior_only = true;
  Rng rng(23);
  const auto out = pf::sm_filter(arg, obs, rng, cfg);
  const double mean = arg.delta * arg.alpha / (1.0 - arg.persistence());
  const double sd = std::sqrt(arg.alpha) * arg.delta / (1.0 - arg.persistence());
  for (std::size_t t : {0u, 9u, 29u}) {
    CHECK(std::abs(out.filtered_mean[t] - mean) < 3.0 * sd / std::sqrt(20000.0));
    CHECK(std::abs(out.filtered_sd[t] - sd) < 0.05 * sd);
  }
  CHECK(out.ess[10] == doctest::Approx(20000.0));
}

TEST_CASE("likelihood estimate is consistent across particle counts") {
  const auto inst = testing::local_instance(25, 9);
  const auto obs = pf::local_observations(0, inst.panel, inst.theta, inst.paths);
  const ArgParams arg = inst.theta.series[0].arg;
  struct Estimate {
    double mean, se;
  };
  auto estimate = [&](std::size_t n, int reps, double shift) {
    pf::FilterConfig cfg;
    cfg.particles = n;
    std::vector<double> z;
    for (int r = 0; r < reps; ++r) {
      Rng rng(1000 + static_cast<std::uint64_t>(r));
      z.push_back(std::exp(pf::sm_filter(arg, obs, rng, cfg).loglik - shift));
    }
    const auto m = testing::moments(z);
    return Estimate{m.mean, m.mean_se};
  };
  Rng rng(24);
  pf::FilterConfig big;
  big.particles = 10000;
  const double shift = pf::sm_filter(arg, obs, rng, big).loglik;
  const auto e100 = estimate(100, 400, shift);
  const auto e1000 = estimate(1000, 60, shift);
  const auto e10000 = estimate(10000, 12, shift);
  auto agree = [](Estimate a, Estimate b) { return std::abs(a.mean - b.mean) < 3.0 * std::hypot(a.se, b.se); };
  CHECK(agree(e100, e1000));
  CHECK(agree(e100, e10000));
  CHECK(agree(e1000, e10000));
}

TEST_CASE("local filter ignores xi when no day is amplified") {
  auto inst = testing::local_instance(30, 7);
  for (auto& s : inst.paths.s[0]) s = 0;
  pf::FilterConfig cfg;
  cfg.particles = 500;
  Rng r1(25), r2(25);
  const auto a = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, r1, cfg);
  inst.theta.series[0].xi[1] = 40.0;
  const auto b = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, r2, cfg);
  CHECK(a.path == b.path);
  CHECK(a.filtered_mean == b.filtered_mean);
  CHECK(a.loglik == b.loglik);
}

TEST_CASE("same seed gives the same cloud and path") {
  const auto inst = testing::local_instance(30, 8);
  pf::FilterConfig cfg;
  cfg.particles = 700;
  Rng r1(26), r2(26);
  const auto a = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, r1, cfg);
  const auto b = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, r2, cfg);
  CHECK(a.path == b.path);
  CHECK(a.initial == b.initial);
  CHECK(a.final_cloud.values == b.final_cloud.values);
  CHECK(a.final_cloud.log_weights == b.final_cloud.log_weights);
}

TEST_CASE("serial and OpenMP kernels are bit-identical") {
  const auto inst = testing::local_instance(40, 10);
  pf::FilterConfig cfg;
  cfg.particles = 3000;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  cfg.backend = pf::Backend::openmp;
  Rng r1(27);
  const auto par = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, r1, cfg);
  omp_set_num_threads(saved);
  cfg.backend = pf::Backend::serial;
  Rng r2(27);
  const auto ser = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, r2, cfg);
  CHECK(par.path == ser.path);
  CHECK(par.filtered_mean == ser.filtered_mean);
  CHECK(par.final_cloud.values == ser.final_cloud.values);
  CHECK(par.loglik == ser.loglik);

  // kernel level, with a particle count that leaves a partial block
  const ArgParams arg{2.0, 1.0, 0.5};
  const auto obs = pf::local_observations(0, inst.panel, inst.theta, inst.paths);
  std::vector<double> parents(1000);
  std::vector<std::size_t> anc(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    parents[i] = 0.5 + 0.01 * static_cast<double>(i);
    anc[i] = (i * 7) % 1000;
  }
  std::vector<double> c1(1000), c2(1000), w1(1000), w2(1000);
  pf::kernels::mutate_and_weight_serial(arg, obs, 3, 99, parents, anc, false, c1, w1);
  omp_set_num_threads(3);
  pf::kernels::mutate_and_weight_openmp(arg, obs, 3, 99, parents, anc, false, c2, w2);
  omp_set_num_threads(saved);
  CHECK(c1 == c2);
  CHECK(w1 == w2);
}

TEST_CASE("systematic resampling") {
  Rng rng(28);
  SUBCASE("uniform weights keep every particle once") {
    const std::vector<double> w(8, 0.125);
    auto idx = pf::resample_systematic(rng, w, 8);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < 8; ++i) CHECK(idx[i] == i);
  }
  SUBCASE("two live particles") {
    const std::vector<double> w{0.5, 0.5, 0.0, 0.0};
    const auto idx = pf::resample_systematic(rng, w, 4);
    CHECK(std::count(idx.begin(), idx.end(), 0u) == 2);
    CHECK(std::count(idx.begin(), idx.end(), 1u) == 2);
  }
  SUBCASE("offspring counts are unbiased") {
    const std::vector<double> w{0.13, 0.02, 0.4, 0.25, 0.2};
    const std::size_t n = 7;
    std::vector<std::vector<double>> offspring(w.size());
    for (int r = 0; r < 100'000; ++r) {
      std::vector<double> c(w.size(), 0.0);
      for (auto i : pf::resample_systematic(rng, w, n)) c[i] += 1.0;
      for (std::size_t i = 0; i < w.size(); ++i) offspring[i].push_back(c[i]);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto m = testing::moments(offspring[i]);
      CHECK(std::abs(m.mean - static_cast<double>(n) * w[i]) < 3.0 * m.mean_se + 1e-12);
      // systematic resampling gives floor or ceil of n w_i
      const double lo = std::floor(static_cast<double>(n) * w[i]);
      const bool bounded = std::all_of(offspring[i].begin(), offspring[i].end(),
                                       [&](double c) { return c == lo || c == lo + 1.0; });
      CHECK(bounded);
    }
  }
  SUBCASE("bad weights") {
    CHECK_THROWS_AS(pf::resample_systematic(rng, std::vector<double>{0.5, -0.1, 0.6}, 3), DomainError);
    CHECK_THROWS_AS(pf::resample_systematic(rng, std::vector<double>{0.5, 0.4}, 3), DomainError);
    CHECK_THROWS_AS(pf::resample_systematic(rng, std::vector<double>{0.5, NAN}, 3), DomainError);
  }
}

TEST_CASE("collapse raises after the retries are spent") {
  const ArgParams arg{2.0, 0.5, 0.5};
  pf::AffinePoissonObs obs(5, 1);
  for (std::size_t t = 0; t < 5; ++t) obs.set(t, 0, 3, 0.0, 0.0);
  pf::FilterConfig cfg;
  cfg.particles = 50;
  Rng rng(29);
  try {
    (void)pf::sm_filter(arg, obs, rng, cfg);
    CHECK(false);
  } catch (const FilterDegeneracyError& e) {
    CHECK(e.step() == 1);
    CHECK(std::string(e.what()).find("N=200") != std::string::npos);
  }
}

TEST_CASE("filtered quantiles are ordered") {
  const auto inst = testing::local_instance(20, 11);
  pf::FilterConfig cfg;
  cfg.particles = 2000;
  cfg.quantiles = {0.95, 0.05, 0.5};
  Rng rng(30);
  const auto out = pf::sm_filter_local(0, inst.panel, inst.theta, inst.paths, rng, cfg);
  for (const auto& q : out.filtered_quantiles) {
    CHECK(q[1] <= q[2]);
    CHECK(q[2] <= q[0]);
  }
}
