#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <random>

#include "argpois/errors.hpp"
#include "argpois/mcmc.hpp"
#include "argpois/simulate.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace argpois;
using namespace argpois::mcmc;

namespace {

AdaptState adapt_with(double step) {
  AdaptState a;
  a.log_step = std::log(step);
  return a;
}

sim::SimSpec small_spec(std::uint64_t seed, std::size_t days) {
  auto spec = sim::default_spec(seed);
  spec.days = days;
  return spec;
}

}  // namespace

TEST_CASE("adaptive step reaches the target acceptance rate") {
  Rng rng(41);
  auto a = adapt_with(5.0);
  double x = 0.0;
  auto target = [](double v) { return -0.5 * v * v; };
  for (int i = 0; i < 20'000; ++i) x = arwmh_step(rng, x, target, Proposal::normal, a).value;
  a.freeze();
  for (int i = 0; i < 100'000; ++i) x = arwmh_step(rng, x, target, Proposal::normal, a).value;
  CHECK(a.frozen_proposed == 100'000);
  CHECK(std::abs(a.frozen_acceptance_rate() - 0.30) < 0.05);
}

TEST_CASE("lognormal proposals leave a Gamma target invariant") {
  Rng rng(42);
  auto a = adapt_with(0.5);
  auto target = [](double v) { return v > 0.0 ? 2.0 * std::log(v) - v / 2.0 : -INFINITY; };
  double x = 6.0;
  for (int i = 0; i < 20'000; ++i) x = arwmh_step(rng, x, target, Proposal::lognormal, a).value;
  a.freeze();
  std::vector<double> draws(1'000'000);
  for (auto& d : draws) d = x = arwmh_step(rng, x, target, Proposal::lognormal, a).value;
  const auto m = testing::moments(draws);
  CHECK(std::abs(m.mean - 6.0) < 3.0 * testing::batch_means_se(draws));
  std::vector<double> sq(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) sq[i] = (draws[i] - 6.0) * (draws[i] - 6.0);
  CHECK(std::abs(testing::moments(sq).mean - 12.0) < 3.0 * testing::batch_means_se(sq));
}

TEST_CASE("proposal families") {
  Rng rng(43);
  SUBCASE("truncated lognormal stays inside (0, upper)") {
    bool inside = true;
    for (double cur : {0.999, 0.5, 1e-4}) {
      for (double step : {0.01, 1.0, 10.0}) {
        for (int i = 0; i < 20'000; ++i) {
          const auto p = propose(rng, cur, Proposal::truncated_lognormal, step, 1.0);
          inside = inside && p.value > 0.0 && p.value < 1.0 && std::isfinite(p.log_correction);
        }
      }
    }
    CHECK(inside);
  }
  SUBCASE("gamma proposal is positive with mean at the current value") {
    std::vector<double> v(200'000);
    for (auto& d : v) d = propose(rng, 2.5, Proposal::gamma, 0.3).value;
    const auto m = testing::moments(v);
    CHECK(*std::min_element(v.begin(), v.end()) > 0.0);
    CHECK(std::abs(m.mean - 2.5) < 3.0 * m.mean_se);
  }
  SUBCASE("NaN targets are rejections") {
    auto a = adapt_with(1.0);
    auto nan_target = [](double v) { return v > 0.0 ? std::nan("") : 0.0; };
    double x = -1.0;
    for (int i = 0; i < 500; ++i) x = arwmh_step(rng, x, nan_target, Proposal::normal, a).value;
    CHECK(a.nan_rejects > 0);
    CHECK(x <= 0.0);
  }
}

TEST_CASE("ARG parameter updates") {
  SUBCASE("recover known parameters from a long path") {
    const ArgParams truth{1.0, 0.6, 0.8};
    std::mt19937_64 gen(44);
    double x = std::gamma_distribution<double>(1.0, 0.8 / (1.0 - 0.48))(gen);
    const double initial = x;
    std::vector<double> path;
    for (int t = 0; t < 2000; ++t) {
      const int k = std::poisson_distribution<int>(0.6 * x)(gen);
      x = std::gamma_distribution<double>(1.0 + k, 0.8)(gen);
      path.push_back(x);
    }
    ArgPriors priors{1.0, 1.0, 1.0, 1.0, {2.0, 2.0, 2.0}};
    ArgParams cur{0.5, 0.5, 0.5};
    ArgAdapt adapt;
    Rng rng(45);
    std::vector<double> alpha, beta, delta;
    for (int i = 0; i < 3000; ++i) {
      if (i == 1000) {
        adapt.alpha.freeze();
        adapt.beta.freeze();
        adapt.delta.freeze();
      }
      cur = sample_arg_params(rng, initial, path, priors, cur, adapt);
      CHECK_FALSE(cur.delta >= 2.0);
      if (i >= 1000) {
        alpha.push_back(cur.alpha);
        beta.push_back(cur.beta);
        delta.push_back(cur.delta);
      }
    }
    auto near = [](const std::vector<double>& v, double target) {
      const auto m = testing::moments(v);
      return std::abs(m.mean - target) < 3.0 * std::sqrt(m.var);
    };
    CHECK(near(alpha, truth.alpha));
    CHECK(near(beta, truth.beta));
    CHECK(near(delta, truth.delta));
  }
  SUBCASE("constant path enters through beta times the level") {
    const double c = 1.7;
    const std::vector<double> path(25, c);
    for (double beta : {0.2, 0.9, 1.4}) {
      const ArgParams a{1.3, beta, 0.6};
      CHECK(arg_transition_loglik(a, c, path) ==
            doctest::Approx(25.0 * dist::ncga_logpdf(c, {1.3, beta * c, 0.6})).epsilon(1e-13));
    }
  }
  SUBCASE("delta never leaves (0, tau)") {
    ArgPriors priors{1.0, 1.0, 1.0, 1.0, {2.0, 2.0, 0.3}};
    const std::vector<double> path(30, 5.0);
    ArgParams cur{2.0, 1.0, 0.25};
    ArgAdapt adapt;
    Rng rng(46);
    bool inside = true;
    for (int i = 0; i < 2000; ++i) {
      cur = sample_arg_params(rng, 5.0, path, priors, cur, adapt);
      inside = inside && cur.delta > 0.0 && cur.delta < 0.3;
    }
    CHECK(inside);
  }
  SUBCASE("target includes the initial-law density") {
    const ArgParams a{1.3, 0.7, 0.6};
    const std::vector<double> path{1.0, 2.0};
    ArgPriors priors{1.0, 1.0, 1.0, 1.0, {2.0, 2.0, 1.0}};
    const auto init = initial_law(a);
    const double expected = dist::gamma_logpdf(0.7, 1.0, 1.0) + dist::gamma_logpdf(1.5, init.shape, init.scale) +
                            arg_transition_loglik(a, 1.5, path);
    CHECK(arg_log_target(ArgComponent::beta, 0.7, a, 1.5, path, priors, 1e-12) == doctest::Approx(expected));
  }
}

TEST_CASE("eta full conditional") {
  HyperParams h;
  h.a_eta = 1.5;
  h.b_eta = 2.0;
  h.c_gamma = 1.0;
  for (double xi : {0.0, 1.3}) {
    const double gamma = 0.8;
    const double shape = h.a_eta + gamma * (h.c_gamma + 1.0);
    const double scale = h.b_eta / (1.0 + h.b_eta * xi);
    Rng rng(47);
    std::vector<double> v(1'000'000);
    for (auto& d : v) d = sample_eta(rng, xi, gamma, h);
    const auto m = testing::moments(v);
    CAPTURE(xi);
    CHECK(std::abs(m.mean - shape * scale) < 3.0 * m.mean_se);
    CHECK(std::abs(m.var - shape * scale * scale) < 3.0 * m.var_se);
  }
  SUBCASE("vanishing gamma leaves the prior shape") {
    Rng rng(48);
    std::vector<double> v(200'000);
    for (auto& d : v) d = sample_eta(rng, 0.0, 1e-12, h);
    CHECK(testing::ks_pvalue(v, [&](double x) { return boost::math::gamma_p(h.a_eta, x / h.b_eta); }) > 0.01);
  }
}

TEST_CASE("xi full conditional") {
  SUBCASE("no amplified days gives the prior") {
    Rng rng(49);
    AdaptState a;
    std::vector<double> v(100'000);
    for (auto& d : v) d = sample_xi(rng, 1.0, XiData{}, 2.5, 1.5, a);
    CHECK(testing::ks_pvalue(v, [](double x) { return boost::math::gamma_p(2.5, x * 1.5); }) > 0.01);
  }
  SUBCASE("MH histogram matches the grid-normalized conditional") {
    const auto d = testing::tiny_dataset();
    const auto data = xi_data(0, d.panel, d.theta, d.paths);
    REQUIRE(data.counts.size() == 2);
    const auto& sp = d.theta.series[0];
    // library target and the oracle differ only by a constant
    const double offset = xi_log_target(1.0, data, sp.gamma, sp.eta) - testing::xi_oracle(1.0, d);
    for (double xi : {0.2, 2.0, 5.0}) {
      CHECK(xi_log_target(xi, data, sp.gamma, sp.eta) - testing::xi_oracle(xi, d) == doctest::Approx(offset));
    }
    Rng rng(50);
    auto a = adapt_with(0.5);
    double xi = 1.0;
    for (int i = 0; i < 20'000; ++i) xi = sample_xi(rng, xi, data, sp.gamma, sp.eta, a);
    a.freeze();
    std::vector<double> draws(1'000'000);
    for (auto& v : draws) v = xi = sample_xi(rng, xi, data, sp.gamma, sp.eta, a);
    const auto mass = testing::grid_masses([&](double v) { return testing::xi_oracle(v, d); }, 0.0, 8.0, 40);
    CHECK(testing::histogram_tv(draws, 0.0, 8.0, mass) < 0.02);
  }
  SUBCASE("larger regime-2 counts favour larger xi") {
    auto d = testing::tiny_dataset();
    const auto& sp = d.theta.series[0];
    const auto low = xi_data(0, d.panel, d.theta, d.paths);
    d.panel.y[0][1] *= 3;
    d.panel.y[0][4] *= 3;
    const auto high = xi_data(0, d.panel, d.theta, d.paths);
    for (double lo : {0.3, 1.0, 2.0}) {
      const double hi = lo + 0.5;
      const double r_low = xi_log_target(hi, low, sp.gamma, sp.eta) - xi_log_target(lo, low, sp.gamma, sp.eta);
      const double r_high = xi_log_target(hi, high, sp.gamma, sp.eta) - xi_log_target(lo, high, sp.gamma, sp.eta);
      CHECK(r_high > r_low);
    }
  }
}

TEST_CASE("phi full conditional") {
  SUBCASE("MH histogram matches the grid-normalized conditional") {
    const auto d = testing::tiny_dataset();
    const double prior_var = 4.0;
    PhiData data{d.panel.y[0], &d.panel.covariates[0], std::vector<double>(6)};
    const auto& sp = d.theta.series[0];
    for (std::size_t t = 0; t < 6; ++t) {
      data.baseline[t] = d.paths.w[t] + d.paths.x[0][t] * (1.0 + sp.xi[static_cast<std::size_t>(d.paths.s[0][t])]);
    }
    const auto prior = gaussian_prior(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, prior_var));
    Rng rng(51);
    std::vector<AdaptState> a{adapt_with(1.0)};
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(1);
    for (int i = 0; i < 20'000; ++i) phi = sample_phi(rng, phi, data, prior, a);
    a[0].freeze();
    std::vector<double> draws(1'000'000);
    for (auto& v : draws) {
      phi = sample_phi(rng, phi, data, prior, a);
      v = phi[0];
    }
    const auto mass = testing::grid_masses([&](double v) { return testing::phi_oracle(v, d, prior_var); }, -8.0, 4.0, 40);
    CHECK(testing::histogram_tv(draws, -8.0, 4.0, mass) < 0.02);
  }
  SUBCASE("zero covariates leave the prior") {
    const Eigen::MatrixXd v = Eigen::MatrixXd::Zero(5, 1);
    PhiData data{{1, 4, 2, 0, 3}, &v, std::vector<double>(5, 1.0)};
    const auto prior = gaussian_prior(Eigen::VectorXd::Constant(1, 0.5), Eigen::MatrixXd::Constant(1, 1, 2.0));
    Rng rng(52);
    std::vector<AdaptState> a{adapt_with(1.0)};
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(1);
    for (int i = 0; i < 20'000; ++i) phi = sample_phi(rng, phi, data, prior, a);
    a[0].freeze();
    std::vector<double> draws(500'000);
    for (auto& x : draws) {
      phi = sample_phi(rng, phi, data, prior, a);
      x = phi[0];
    }
    const auto mass = testing::grid_masses([](double x) { return -0.25 * (x - 0.5) * (x - 0.5); }, -6.0, 7.0, 40);
    CHECK(testing::histogram_tv(draws, -6.0, 7.0, mass) < 0.02);
  }
  SUBCASE("a very tight prior pins the draws") {
    const double eps = 1e-8;
    const Eigen::MatrixXd v = Eigen::MatrixXd::Ones(5, 2);
    PhiData data{{1, 40, 2, 0, 3}, &v, std::vector<double>(5, 1.0)};
    Eigen::VectorXd mean(2);
    mean << 0.3, -0.2;
    const auto prior = gaussian_prior(mean, Eigen::MatrixXd::Identity(2, 2) * eps);
    Rng rng(53);
    std::vector<AdaptState> a(2, adapt_with(1e-4));
    Eigen::VectorXd phi = mean;
    for (int i = 0; i < 5000; ++i) {
      phi = sample_phi(rng, phi, data, prior, a);
      CHECK_FALSE((phi - mean).cwiseAbs().maxCoeff() > 10.0 * std::sqrt(eps));
    }
  }
  SUBCASE("recover a covariate effect") {
    const std::size_t T = 2000;
    Eigen::MatrixXd v(static_cast<Eigen::Index>(T), 2);
    Eigen::VectorXd truth(2);
    truth << 0.5, 0.8;
    std::mt19937_64 gen(54);
    std::vector<std::int64_t> y(T);
    std::vector<double> baseline(T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto i = static_cast<Eigen::Index>(t);
      v(i, 0) = 1.0;
      v(i, 1) = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 7.0);
      baseline[t] = 1.0 + 0.5 * static_cast<double>(t % 3);
      y[t] = std::poisson_distribution<std::int64_t>(baseline[t] + std::exp(v.row(i).dot(truth)))(gen);
    }
    PhiData data{y, &v, baseline};
    const auto prior = gaussian_prior(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2) * 4.0);
    Rng rng(55);
    std::vector<AdaptState> a(2, adapt_with(0.1));
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(2);
    std::vector<double> p0, p1;
    for (int i = 0; i < 6000; ++i) {
      if (i == 1000) {
        for (auto& s : a) s.freeze();
      }
      phi = sample_phi(rng, phi, data, prior, a);
      if (i >= 1000) {
        p0.push_back(phi[0]);
        p1.push_back(phi[1]);
      }
    }
    const auto m0 = testing::moments(p0);
    const auto m1 = testing::moments(p1);
    CHECK(std::abs(m0.mean - truth[0]) < 3.0 * std::sqrt(m0.var));
    CHECK(std::abs(m1.mean - truth[1]) < 3.0 * std::sqrt(m1.var));
  }
  SUBCASE("prior covariance must be symmetric positive definite") {
    Eigen::MatrixXd c(2, 2);
    c << 1.0, 0.5, 0.4, 1.0;
    CHECK_THROWS_AS(gaussian_prior(Eigen::VectorXd::Zero(2), c), ValidationError);
    c << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(gaussian_prior(Eigen::VectorXd::Zero(2), c), ValidationError);
  }
}

TEST_CASE("transition matrix full conditional") {
  const std::vector<double> prior{1.0, 2.0};
  SUBCASE("Dirichlet moments given a path") {
    const std::vector<int> s{0, 0, 1, 1, 1, 0, 1, 1, 0, 0, 0};
    const auto n = transition_counts(1, s, 2);
    Rng rng(56);
    std::vector<double> r0(1'000'000), r1(1'000'000);
    for (std::size_t i = 0; i < r0.size(); ++i) {
      const auto m = sample_lambda(rng, 1, s, prior);
      r0[i] = m(0, 0);
      r1[i] = m(1, 1);
    }
    auto check_beta = [](const std::vector<double>& v, double a, double b) {
      const auto m = testing::moments(v);
      const double mean = a / (a + b);
      const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
      CHECK(std::abs(m.mean - mean) < 3.0 * m.mean_se);
      CHECK(std::abs(m.var - var) < 3.0 * m.var_se);
    };
    check_beta(r0, prior[0] + n(0, 0), prior[1] + n(0, 1));
    check_beta(r1, prior[1] + n(1, 1), prior[0] + n(1, 0));
  }
  SUBCASE("unvisited row follows the prior") {
    Rng rng(57);
    std::vector<double> v(200'000);
    for (auto& d : v) d = sample_lambda(rng, 0, std::vector<int>(10, 0), prior)(1, 0);
    const auto m = testing::moments(v);
    CHECK(std::abs(m.mean - 1.0 / 3.0) < 3.0 * m.mean_se);
  }
  SUBCASE("long chain recovers the rows") {
    Eigen::MatrixXd truth(2, 2);
    truth << 0.93, 0.07, 0.4, 0.6;
    std::mt19937_64 gen(58);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> s(20'000);
    int prev = 0;
    for (auto& v : s) prev = v = u(gen) < truth(prev, 0) ? 0 : 1;
    Rng rng(59);
    std::vector<double> a(20'000), b(20'000);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto m = sample_lambda(rng, 0, s, prior);
      CHECK_FALSE(std::abs(m.row(0).sum() - 1.0) > 1e-12);
      a[i] = m(0, 0);
      b[i] = m(1, 1);
    }
    const auto ma = testing::moments(a);
    const auto mb = testing::moments(b);
    CHECK(std::abs(ma.mean - 0.93) < 3.0 * std::sqrt(ma.var));
    CHECK(std::abs(mb.mean - 0.6) < 3.0 * std::sqrt(mb.var));
  }
}

TEST_CASE("hyper-parameter validation") {
  HyperParams h;
  CHECK_NOTHROW(h.validate());
  h.b_eta = 0.0;
  CHECK_THROWS_AS(h.validate(), ValidationError);
  h = HyperParams{};
  h.tau = -1.0;
  CHECK_THROWS_AS(h.validate(), ValidationError);
  h = HyperParams{};
  h.lambda_prior = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(h.resolved_lambda_prior(2), ValidationError);

  SUBCASE("jump hyper-parameters must give a proper prior on xi") {
    // eta integrated out by hand, gamma by quadrature up to a cutoff: the
    // density at xi grows without bound in the cutoff exactly when improper
    auto xi_density = [](const HyperParams& hp, double xi, double cutoff) {
      const double k = hp.c_gamma + 1.0;
      auto term = [&](double g) {
        return std::exp(std::lgamma(hp.a_eta + g * k) - (hp.a_eta + g * k) * std::log(1.0 / hp.b_eta + xi) +
                        (g - 1.0) * std::log(hp.a_gamma * xi) - (hp.b_gamma + 1.0) * std::lgamma(g));
      };
      return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(term, 1e-9, cutoff, 15, 1e-10);
    };
    auto grows = [&](const HyperParams& hp) {
      return xi_density(hp, 1.0, 800.0) > 10.0 * xi_density(hp, 1.0, 200.0);
    };
    HyperParams bad;
    bad.a_gamma = 1.0;
    CHECK(grows(bad));
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK_FALSE(grows(HyperParams{}));
    CHECK_NOTHROW(HyperParams{}.validate());
    HyperParams heavier;
    heavier.a_gamma = 1.0;
    heavier.b_gamma = 2.0;
    CHECK_FALSE(grows(heavier));
    CHECK_NOTHROW(heavier.validate());
    HyperParams light;
    light.b_gamma = 0.5;
    CHECK_THROWS_AS(light.validate(), ValidationError);
  }

  McmcConfig c;
  CHECK_NOTHROW(c.validate());
  c.burnin = c.sweeps;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = McmcConfig{};
  c.adapt_decay = 0.4;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("Gibbs sampler") {
  McmcConfig cfg;
  cfg.sweeps = 12;
  cfg.burnin = 4;
  cfg.particles = 150;
  cfg.path_thin = 2;
  cfg.seed = 9;

  SUBCASE("all-zero data gives a finite, stable trace") {
    const auto panel = testing::flat_panel(2, 30, 0);
    const auto out = run_gibbs(panel, HyperParams{}, cfg);
    REQUIRE(out.records.size() == 8);
    for (const auto& r : out.records) CHECK(std::isfinite(r.loglik));
    for (double w : out.summary.w) CHECK(w < 0.5);
  }

  auto spec = small_spec(3, 60);
  spec.covariates = {sim::CovariateSpec{}, sim::CovariateSpec{}};
  spec.covariates[0].kind = sim::CovariateSpec::Kind::sinusoid;
  spec.global_covariates.kind = sim::CovariateSpec::Kind::constant;
  spec.theta.series[0].phi = Eigen::VectorXd::Constant(2, 0.2);
  spec.theta.global.phi = Eigen::VectorXd::Constant(1, 0.1);
  const auto data = sim::simulate_dataset(spec);

  SUBCASE("identical seeds give identical draws, across backends too") {
    auto a = run_gibbs(data.panel, HyperParams{}, cfg);
    cfg.backend = pf::Backend::serial;
    auto b = run_gibbs(data.panel, HyperParams{}, cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].loglik == b.records[i].loglik);
      CHECK(a.records[i].theta.series[1].xi == b.records[i].theta.series[1].xi);
      CHECK(a.records[i].paths.has_value() == b.records[i].paths.has_value());
    }
    CHECK(a.summary.w == b.summary.w);
  }

  SUBCASE("stopping and continuing matches an uninterrupted run") {
    GibbsSampler sampler(data.panel, HyperParams{}, cfg);
    std::vector<DrawRecord> straight, split;
    auto s1 = sampler.initial_state();
    sampler.run(s1, [&](const DrawRecord& r, const GibbsState&) { straight.push_back(r); });
    auto s2 = sampler.initial_state();
    sampler.run(s2, [&](const DrawRecord& r, const GibbsState&) { split.push_back(r); }, 6);
    CHECK(s2.sweeps_done == 6);
    sampler.run(s2, [&](const DrawRecord& r, const GibbsState&) { split.push_back(r); });
    REQUIRE(straight.size() == split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
      CHECK(straight[i].loglik == split[i].loglik);
      CHECK(straight[i].theta.global.arg.alpha == split[i].theta.global.arg.alpha);
    }
    CHECK(s1.sums.x == s2.sums.x);
  }

  SUBCASE("adaptation freezes at the end of burn-in") {
    GibbsSampler sampler(data.panel, HyperParams{}, cfg);
    auto st = sampler.initial_state();
    sampler.run(st, nullptr);
    CHECK_FALSE(st.series_adapt[0].xi.adapting);
    CHECK(st.series_adapt[0].arg.alpha.frozen_proposed == cfg.sweeps - cfg.burnin);
  }

  SUBCASE("updating one block leaves the rest bit-identical") {
    struct Snapshot {
      std::vector<double> w, x0, x1;
      std::vector<int> s0, s1;
      ArgParams garg, arg0, arg1;
      Eigen::VectorXd gphi, phi0;
      Eigen::MatrixXd lam0, lam1;
      std::vector<double> jump0, jump1;
    };
    auto snap = [](const GibbsState& st) {
      Snapshot s;
      s.w = st.paths.w;
      s.w.push_back(st.paths.w_initial);
      s.x0 = st.paths.x[0];
      s.x0.push_back(st.paths.x_initial[0]);
      s.x1 = st.paths.x[1];
      s.s0 = st.paths.s[0];
      s.s0.push_back(st.paths.s_initial[0]);
      s.s1 = st.paths.s[1];
      s.garg = st.theta.global.arg;
      s.arg0 = st.theta.series[0].arg;
      s.arg1 = st.theta.series[1].arg;
      s.gphi = st.theta.global.phi;
      s.phi0 = st.theta.series[0].phi;
      s.lam0 = st.theta.series[0].transition;
      s.lam1 = st.theta.series[1].transition;
      const auto& a = st.theta.series[0];
      const auto& b = st.theta.series[1];
      s.jump0 = {a.eta, a.gamma, a.xi[1]};
      s.jump1 = {b.eta, b.gamma, b.xi[1]};
      return s;
    };
    auto same_arg = [](const ArgParams& a, const ArgParams& b) {
      return a.alpha == b.alpha && a.beta == b.beta && a.delta == b.delta;
    };
    struct Block {
      const char* name;
      bool BlockMask::*flag;
    };
    const Block blocks[] = {{"global_latent", &BlockMask::global_latent}, {"global_arg", &BlockMask::global_arg},
                            {"global_phi", &BlockMask::global_phi},       {"local_latent", &BlockMask::local_latent},
                            {"regimes", &BlockMask::regimes},             {"transition", &BlockMask::transition},
                            {"jump", &BlockMask::jump},                   {"local_arg", &BlockMask::local_arg},
                            {"local_phi", &BlockMask::local_phi}};
    // a few full sweeps first so regimes and latents are not at their start values
    GibbsSampler warm(data.panel, HyperParams{}, cfg);
    auto base = warm.initial_state();
    for (int i = 0; i < 3; ++i) warm.sweep(base);
    for (const auto& blk : blocks) {
      CAPTURE(blk.name);
      auto only = cfg;
      only.blocks = BlockMask{false, false, false, false, false, false, false, false, false};
      only.blocks.*(blk.flag) = true;
      GibbsSampler sampler(data.panel, HyperParams{}, only);
      auto st = base;
      const auto before = snap(st);
      sampler.sweep(st);
      const auto after = snap(st);
      const std::string n = blk.name;
      CHECK((n == "global_latent") == (before.w != after.w));
      CHECK((n == "local_latent") == (before.x0 != after.x0));
      CHECK((n == "local_latent") == (before.x1 != after.x1));
      CHECK((n == "global_arg") == !same_arg(before.garg, after.garg));
      CHECK((n == "local_arg") == !same_arg(before.arg0, after.arg0));
      CHECK((n == "global_phi") == (before.gphi != after.gphi));
      CHECK((n == "local_phi") == (before.phi0 != after.phi0));
      CHECK((n == "transition") == (before.lam0 != after.lam0));
      CHECK((n == "transition") == (before.lam1 != after.lam1));
      CHECK((n == "jump") == (before.jump0 != after.jump0));
      if (n != "regimes") {
        CHECK(before.s0 == after.s0);
        CHECK(before.s1 == after.s1);
      }
    }
  }

  SUBCASE("a failed sweep leaves the state untouched") {
    GibbsSampler sampler(data.panel, HyperParams{}, cfg);
    auto st = sampler.initial_state();
    sampler.sweep(st);
    // a malformed coefficient vector makes the series block fail mid-sweep
    st.theta.series[1].phi = Eigen::VectorXd::Zero(3);
    const auto w_before = st.paths.w;
    const auto done = st.sweeps_done;
    try {
      sampler.sweep(st);
      CHECK(false);
    } catch (const SweepError& e) {
      CHECK(e.sweep() == done);
      CHECK_FALSE(e.filter_degeneracy());
    }
    CHECK(st.paths.w == w_before);
    CHECK(st.sweeps_done == done);
  }

  SUBCASE("three regimes are refused") {
    GibbsSampler sampler(data.panel, HyperParams{}, cfg);
    auto st = sampler.initial_state();
    st.theta.series[0].xi = {0.0, 1.0, 2.0};
    CHECK_THROWS_AS(sampler.sweep(st), ValidationError);
  }
}

TEST_CASE("delta near the bound") {
  std::vector<DrawRecord> recs(4);
  for (std::size_t i = 0; i < 4; ++i) {
    recs[i].theta = testing::two_regime_theta(1);
    recs[i].theta.series[0].arg.delta = i < 3 ? 0.995 : 0.5;
    recs[i].theta.global.arg.delta = 0.2;
  }
  const auto f = delta_near_bound(recs, HyperParams{});
  REQUIRE(f.size() == 2);
  CHECK(f[0] == 0.75);
  CHECK(f[1] == 0.0);
}
