#include <doctest.h>

#include <cmath>

#include "argpois/errors.hpp"
#include "argpois/simulate.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace argpois;

namespace {

sim::SimSpec single_series(double alpha, double beta, double delta, std::size_t days, std::uint64_t seed) {
  sim::SimSpec spec;
  spec.days = days;
  spec.seed = seed;
  spec.theta.global.arg = {2.0, 0.5, 0.5};
  SeriesParams sp;
  sp.arg = {alpha, beta, delta};
  sp.xi = {0.0, 0.0};
  sp.transition.resize(2, 2);
  sp.transition << 0.9, 0.1, 0.3, 0.7;
  spec.theta.series.push_back(sp);
  return spec;
}

double lag1_autocorrelation(const std::vector<double>& v) {
  const auto m = testing::moments(v);
  double c = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) c += (v[i] - m.mean) * (v[i - 1] - m.mean);
  return c / (static_cast<double>(v.size() - 1) * m.var);
}

}  // namespace

TEST_CASE("ARG paths follow the conditional-mean recursion") {
  const auto out = sim::simulate_dataset(single_series(1.0, 0.6, 0.8, 100'000, 61));
  const auto& x = out.truth.x[0];
  const double stationary_mean = 0.8 * 1.0 / (1.0 - 0.48);
  CHECK(std::abs(testing::moments(x).mean - stationary_mean) < 3.0 * testing::batch_means_se(x));

  std::vector<double> lead(x.begin() + 1, x.end()), lag(x.begin(), x.end() - 1);
  const auto fit = testing::ols_hc0(lag, lead);
  CHECK(std::abs(fit.slope - 0.48) < 3.0 * fit.slope_se);
  CHECK(std::abs(fit.intercept - 0.8) < 3.0 * fit.intercept_se);
}

TEST_CASE("persistence raises lag-1 autocorrelation") {
  double previous = -1.0;
  for (double delta : {0.2, 0.5, 0.8}) {
    const auto out = sim::simulate_dataset(single_series(2.0, 1.0, delta, 50'000, 62));
    const double rho = lag1_autocorrelation(out.truth.x[0]);
    CAPTURE(delta);
    CHECK(rho > 0.0);
    CHECK(rho > previous);
    previous = rho;
  }
}

TEST_CASE("regime occupancy matches the stationary law") {
  auto spec = single_series(2.0, 0.5, 0.5, 100'000, 63);
  const auto pi = stationary_distribution(spec.theta.series[0].transition);
  const auto out = sim::simulate_dataset(spec);
  std::vector<double> in2(out.truth.s[0].size());
  for (std::size_t t = 0; t < in2.size(); ++t) in2[t] = out.truth.s[0][t] == 1 ? 1.0 : 0.0;
  CHECK(std::abs(testing::moments(in2).mean - pi[1]) < 3.0 * testing::batch_means_se(in2));
}

TEST_CASE("no jump is indistinguishable from a single regime") {
  auto two = sim::default_spec(1);
  two.days = 40;
  for (auto& sp : two.theta.series) sp.xi[1] = 0.0;
  auto one = two;
  for (auto& sp : one.theta.series) {
    sp.xi = {0.0};
    sp.transition = Eigen::MatrixXd::Ones(1, 1);
  }
  // one count per replicate keeps the samples independent
  std::vector<double> a, b;
  for (std::uint64_t seed = 1; seed <= 3000; ++seed) {
    two.seed = seed;
    one.seed = seed + 100'000;
    a.push_back(static_cast<double>(sim::simulate_dataset(two).panel.y[1].back()));
    b.push_back(static_cast<double>(sim::simulate_dataset(one).panel.y[1].back()));
  }
  CHECK(testing::ks_two_sample_pvalue(a, b) > 0.01);
}

TEST_CASE("counts are over-dispersed") {
  auto spec = sim::default_spec(64);
  spec.days = 20'000;
  const auto out = sim::simulate_dataset(spec);
  for (const auto& y : out.panel.y) {
    std::vector<double> v(y.begin(), y.end());
    const auto m = testing::moments(v);
    CHECK(m.var >= m.mean);
  }
}

TEST_CASE("counts use the model intensities") {
  auto spec = sim::default_spec(65);
  spec.days = 3000;
  spec.covariates = {sim::CovariateSpec{}, sim::CovariateSpec{}};
  spec.covariates[1].kind = sim::CovariateSpec::Kind::sinusoid;
  spec.theta.series[1].phi = Eigen::Vector2d(0.5, 1.0);
  const auto out = sim::simulate_dataset(spec);
  // standardized residuals of y given the true intensities
  std::vector<double> r;
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t t = 0; t < out.panel.days(); ++t) {
      const double lambda = intensity(j, t, spec.theta, out.truth, out.panel);
      r.push_back((static_cast<double>(out.panel.y[j][t]) - lambda) / std::sqrt(lambda));
    }
  }
  const auto m = testing::moments(r);
  CHECK(std::abs(m.mean) < 3.0 * m.mean_se);
  CHECK(std::abs(m.var - 1.0) < 3.0 * m.var_se);
}

TEST_CASE("simulation is reproducible") {
  const auto a = sim::simulate_dataset(sim::default_spec(7));
  const auto b = sim::simulate_dataset(sim::default_spec(7));
  const auto c = sim::simulate_dataset(sim::default_spec(8));
  CHECK(a.panel.y == b.panel.y);
  CHECK(a.panel.z == b.panel.z);
  CHECK(a.truth.w == b.truth.w);
  CHECK(a.truth.s == b.truth.s);
  CHECK(a.panel.y != c.panel.y);
  CHECK(a.panel.days() == 334);
  CHECK(a.panel.dates.front() == "2020-01-01");
  CHECK(a.panel.dates.back() == "2020-11-29");
}

TEST_CASE("dates") {
  const auto d = sim::daily_dates("2020-02-27", 4);
  CHECK(d == std::vector<std::string>{"2020-02-27", "2020-02-28", "2020-02-29", "2020-03-01"});
  CHECK(sim::daily_dates("2021-12-31", 2).back() == "2022-01-01");
  CHECK_THROWS_AS(sim::daily_dates("2021-02-30", 1), ValidationError);
  CHECK_THROWS_AS(sim::daily_dates("31/12/2021", 1), ValidationError);
}

TEST_CASE("covariate generators") {
  sim::CovariateSpec c;
  CHECK(c.generate(5).cols() == 0);
  c.kind = sim::CovariateSpec::Kind::sinusoid;
  c.amplitude = 2.0;
  c.period = 4.0;
  const auto m = c.generate(5);
  REQUIRE(m.cols() == 2);
  CHECK(m.col(0).isOnes());
  CHECK(m(0, 1) == doctest::Approx(2.0));  // days are 1-based in the phase
  CHECK(m(2, 1) == doctest::Approx(-2.0));
  c.kind = sim::CovariateSpec::Kind::matrix;
  c.matrix = Eigen::MatrixXd::Ones(4, 3);
  CHECK_THROWS_AS(c.generate(5), ValidationError);
  CHECK(sim::covariate_kind_from_string("constant") == sim::CovariateSpec::Kind::constant);
  CHECK_THROWS_AS(sim::covariate_kind_from_string("weekly"), ValidationError);
}

TEST_CASE("spec validation") {
  auto spec = sim::default_spec(1);
  CHECK_NOTHROW(spec.validate());
  spec.theta.series[0].arg.delta = 1.0;  // beta delta = 1.2
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  CHECK_THROWS_AS(sim::simulate_dataset(spec), ValidationError);
  spec.allow_nonstationary = true;
  spec.days = 20;
  CHECK_NOTHROW(sim::simulate_dataset(spec));
  spec = sim::default_spec(1);
  spec.theta.series[0].phi = Eigen::VectorXd::Ones(2);  // no covariate columns to match
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = sim::default_spec(1);
  spec.days = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}
