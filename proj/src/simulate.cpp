#include "argpois/simulate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "argpois/distributions.hpp"
#include "argpois/errors.hpp"
#include "argpois/rng.hpp"

namespace argpois::sim {

namespace {

int draw_label(Rng& rng, const Eigen::VectorXd& probs) {
  const double u = uniform_open(rng);
  double acc = 0.0;
  for (Eigen::Index l = 0; l < probs.size(); ++l) {
    acc += probs[l];
    if (u < acc) return static_cast<int>(l);
  }
  return static_cast<int>(probs.size() - 1);
}

double draw_initial(Rng& rng, const ArgParams& arg) {
  const auto law = initial_law(arg);
  return std::max(dist::gamma_sample(rng, law.shape, law.scale), std::numeric_limits<double>::min());
}

void simulate_arg(Rng& rng, const ArgParams& arg, std::size_t days, double& initial,
                  std::vector<double>& path) {
  initial = draw_initial(rng, arg);
  path.resize(days);
  double prev = initial;
  for (std::size_t t = 0; t < days; ++t) {
    prev = dist::ncga_sample(rng, arg.transition(prev));
    path[t] = prev;
  }
}

}  // namespace

std::size_t CovariateSpec::columns() const {
  switch (kind) {
    case Kind::none: return 0;
    case Kind::constant: return 1;
    case Kind::sinusoid: return 2;
    case Kind::matrix: return static_cast<std::size_t>(matrix.cols());
  }
  return 0;
}

Eigen::MatrixXd CovariateSpec::generate(std::size_t days) const {
  const auto T = static_cast<Eigen::Index>(days);
  switch (kind) {
    case Kind::none: return Eigen::MatrixXd(T, 0);
    case Kind::constant: return Eigen::MatrixXd::Constant(T, 1, value);
    case Kind::sinusoid: {
      if (!(period > 0.0)) throw ValidationError("sinusoid covariate: period must be positive");
      Eigen::MatrixXd v(T, 2);
      for (Eigen::Index t = 0; t < T; ++t) {
        v(t, 0) = 1.0;
        v(t, 1) = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t + 1) / period + phase);
      }
      return v;
    }
    case Kind::matrix:
      if (matrix.rows() != T) {
        throw ValidationError("covariate matrix has " + std::to_string(matrix.rows()) + " rows, expected " +
                              std::to_string(days));
      }
      return matrix;
  }
  return Eigen::MatrixXd(T, 0);
}

CovariateSpec::Kind covariate_kind_from_string(const std::string& name) {
  if (name == "none") return CovariateSpec::Kind::none;
  if (name == "constant") return CovariateSpec::Kind::constant;
  if (name == "sinusoid") return CovariateSpec::Kind::sinusoid;
  if (name == "matrix") return CovariateSpec::Kind::matrix;
  throw ValidationError("unknown covariate generator '" + name + "'");
}

std::string to_string(CovariateSpec::Kind kind) {
  switch (kind) {
    case CovariateSpec::Kind::none: return "none";
    case CovariateSpec::Kind::constant: return "constant";
    case CovariateSpec::Kind::sinusoid: return "sinusoid";
    case CovariateSpec::Kind::matrix: return "matrix";
  }
  return "none";
}

void SimSpec::validate() const {
  if (days == 0) throw ValidationError("simulation: days must be positive");
  if (theta.series.empty()) throw ValidationError("simulation: at least one series is required");
  theta.validate(true);
  if (!covariates.empty() && covariates.size() != series()) {
    throw ValidationError("simulation: covariates must list one generator per series");
  }
  for (std::size_t j = 0; j < series(); ++j) {
    const std::size_t p = covariates.empty() ? 0 : covariates[j].columns();
    if (static_cast<std::size_t>(theta.series[j].phi.size()) != p) {
      throw ValidationError("simulation: series " + std::to_string(j + 1) + " has " +
                            std::to_string(theta.series[j].phi.size()) + " coefficients for " +
                            std::to_string(p) + " covariate columns");
    }
  }
  if (static_cast<std::size_t>(theta.global.phi.size()) != global_covariates.columns()) {
    throw ValidationError("simulation: global coefficients do not match the global covariates");
  }
  if (!allow_nonstationary) {
    if (!theta.global.arg.stationary()) {
      throw ValidationError("simulation: global beta*delta must be < 1 (set allow_nonstationary to override)");
    }
    for (std::size_t j = 0; j < series(); ++j) {
      if (!theta.series[j].arg.stationary()) {
        throw ValidationError("simulation: series " + std::to_string(j + 1) +
                              " beta*delta must be < 1 (set allow_nonstationary to override)");
      }
    }
  }
}

SimResult simulate_dataset(const SimSpec& spec) {
  spec.validate();
  const std::size_t T = spec.days;
  const std::size_t J = spec.series();
  SimResult r;
  auto& panel = r.panel;
  auto& truth = r.truth;

  panel.dates = daily_dates(spec.start_date, T);
  panel.global_covariates = spec.global_covariates.generate(T);
  panel.covariates.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    panel.covariates[j] = spec.covariates.empty() ? Eigen::MatrixXd(static_cast<Eigen::Index>(T), 0)
                                                  : spec.covariates[j].generate(T);
  }
  panel.rescale.assign(J, 1.0);

  Rng global_rng = make_stream(spec.seed, {0});
  simulate_arg(global_rng, spec.theta.global.arg, T, truth.w_initial, truth.w);

  truth.x.resize(J);
  truth.x_initial.resize(J);
  truth.s.resize(J);
  truth.s_initial.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    Rng rng = make_stream(spec.seed, {1, j});
    const auto& sp = spec.theta.series[j];
    truth.s_initial[j] = draw_label(rng, stationary_distribution(sp.transition));
    truth.s[j].resize(T);
    int prev = truth.s_initial[j];
    for (std::size_t t = 0; t < T; ++t) {
      prev = draw_label(rng, sp.transition.row(prev).transpose());
      truth.s[j][t] = prev;
    }
    simulate_arg(rng, sp.arg, T, truth.x_initial[j], truth.x[j]);
  }

  Rng count_rng = make_stream(spec.seed, {2});
  panel.z.resize(T);
  panel.y.assign(J, std::vector<std::int64_t>(T));
  for (std::size_t t = 0; t < T; ++t) {
    panel.z[t] = dist::poisson_sample(count_rng, global_intensity(t, spec.theta, truth, panel));
    for (std::size_t j = 0; j < J; ++j) {
      panel.y[j][t] = dist::poisson_sample(count_rng, intensity(j, t, spec.theta, truth, panel));
    }
  }
  return r;
}

SimSpec default_spec(std::uint64_t seed) {
  SimSpec spec;
  spec.days = 334;
  spec.seed = seed;
  spec.theta.global.arg = {10.0, 1.0, 0.5};
  spec.theta.global.phi = Eigen::VectorXd(0);
  const ArgParams args[2] = {{16.0, 1.2, 0.5}, {15.0, 1.4, 0.5}};
  const double xi2[2] = {1.5, 2.0};
  for (int j = 0; j < 2; ++j) {
    SeriesParams sp;
    sp.arg = args[j];
    sp.xi = {0.0, xi2[j]};
    sp.phi = Eigen::VectorXd(0);
    sp.transition.resize(2, 2);
    sp.transition << 0.93, 0.07, 0.4, 0.6;
    spec.theta.series.push_back(sp);
  }
  return spec;
}

std::vector<std::string> daily_dates(const std::string& start, std::size_t days) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(start.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw ValidationError("start date '" + start + "' is not YYYY-MM-DD");
  }
  const std::chrono::year_month_day first{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!first.ok()) throw ValidationError("start date '" + start + "' is not a valid date");
  std::vector<std::string> out;
  out.reserve(days);
  std::chrono::sys_days day{first};
  for (std::size_t i = 0; i < days; ++i, day += std::chrono::days{1}) {
    const std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    out.emplace_back(buf);
  }
  return out;
}

}  // namespace argpois::sim
