#include "argpois/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iostream>
#include <string>
#include <utility>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "argpois/errors.hpp"
#include "argpois/ffbs.hpp"

namespace argpois::mcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kNanWarnThreshold = 100;
// keeps a runaway adaptation from reaching a step that under/overflows
constexpr double kMinLogStep = -20.0;
constexpr double kMaxLogStep = 5.0;

bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }

void require_positive(double v, const char* name) {
  if (!positive_finite(v)) {
    throw ValidationError(std::string("hyper-parameter ") + name + " must be positive and finite");
  }
}

double std_normal_cdf(double x) {
  static const boost::math::normal_distribution<double> n;
  return boost::math::cdf(n, x);
}

double std_normal_quantile(double p) {
  static const boost::math::normal_distribution<double> n;
  return boost::math::quantile(n, p);
}

AdaptState fresh_adapt(const McmcConfig& cfg) {
  AdaptState a;
  a.log_step = std::log(cfg.initial_step);
  a.gain = cfg.adapt_gain;
  a.decay = cfg.adapt_decay;
  return a;
}

ArgAdapt fresh_arg_adapt(const McmcConfig& cfg) {
  return {fresh_adapt(cfg), fresh_adapt(cfg), fresh_adapt(cfg)};
}

void freeze_all(GibbsState& st) {
  auto freeze_arg = [](ArgAdapt& a) {
    a.alpha.freeze();
    a.beta.freeze();
    a.delta.freeze();
  };
  freeze_arg(st.global_adapt.arg);
  for (auto& a : st.global_adapt.phi) a.freeze();
  for (auto& sa : st.series_adapt) {
    freeze_arg(sa.arg);
    sa.xi.freeze();
    for (auto& a : sa.phi) a.freeze();
  }
}

ArgParams starting_arg(double mean, double tau) {
  ArgParams a;
  a.delta = tau / 2.0;
  a.beta = 0.5 / a.delta;
  a.alpha = std::max(mean, 0.5) * 0.5 / a.delta;
  return a;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 1.0 : s / static_cast<double>(v.size());
}

}  // namespace

// ---- hyper-parameters ----------------------------------------------------

void HyperParams::validate() const {
  require_positive(a_eta, "a_eta");
  require_positive(b_eta, "b_eta");
  require_positive(a_gamma, "a_gamma");
  require_positive(b_gamma, "b_gamma");
  require_positive(c_gamma, "c_gamma");
  require_positive(a_alpha, "a_alpha");
  require_positive(b_alpha, "b_alpha");
  require_positive(a_beta, "a_beta");
  require_positive(b_beta, "b_beta");
  require_positive(a_delta, "a_delta");
  require_positive(b_delta, "b_delta");
  require_positive(tau, "tau");
  require_positive(a_alpha_w, "a_alpha_w");
  require_positive(b_alpha_w, "b_alpha_w");
  require_positive(a_beta_w, "a_beta_w");
  require_positive(b_beta_w, "b_beta_w");
  require_positive(a_delta_w, "a_delta_w");
  require_positive(b_delta_w, "b_delta_w");
  require_positive(tau_w, "tau_w");
  require_positive(phi_prior_var, "phi_prior_var");
  for (double l : lambda_prior) require_positive(l, "lambda_prior");
  if (phi_mean.size() != 0 && phi_cov.size() != 0) gaussian_prior(phi_mean, phi_cov);
  if (phi_z_mean.size() != 0 && phi_z_cov.size() != 0) gaussian_prior(phi_z_mean, phi_z_cov);

  // Integrating eta out leaves terms Gamma(a_eta + g k) (a_gamma xi)^g /
  // ((1/b_eta + xi)^(g k) Gamma(g)^(b_gamma + 1)), k = c_gamma + 1, summed over g.
  // They decay for every xi only under the condition below.
  if (b_gamma < c_gamma || (b_gamma == c_gamma && a_gamma * std::pow(c_gamma * b_eta, c_gamma) >= 1.0)) {
    throw ValidationError("jump hyper-parameters give an improper prior on xi: need b_gamma > c_gamma, or b_gamma == "
                          "c_gamma and a_gamma * (c_gamma * b_eta)^c_gamma < 1");
  }

  // The prior on gamma is a^(g-1) eta^(g c) / Gamma(g)^b. Integrate it on a
  // wide log grid at eta values spanning the bulk of the eta prior and require
  // both boundary cells to hold negligible mass.
  for (double q : {1e-3, 0.5, 0.999}) {
    const double eta = boost::math::quantile(boost::math::gamma_distribution<double>(a_eta, b_eta), q);
    const dist::ShapeConjugateDensity prior{std::log(a_gamma) + c_gamma * std::log(eta), b_gamma};
    dist::GridSpec grid;
    grid.lower = 1e-12;
    grid.upper = std::max(50.0, prior.mode() + 20.0 * prior.laplace_sd());
    const auto nodes = dist::grid_nodes(grid);
    // integrand in log g: f(g) * g
    std::vector<double> lg(nodes.size());
    double peak = kNegInf;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      lg[i] = prior(nodes[i]) + std::log(nodes[i]);
      peak = std::max(peak, lg[i]);
    }
    double total = 0.0;
    for (double v : lg) total += std::exp(v - peak);
    const double edge = std::max(std::exp(lg.front() - peak), std::exp(lg.back() - peak));
    if (!std::isfinite(peak) || !std::isfinite(total) || !(edge < 1e-8 * total)) {
      throw ValidationError("gamma-shape prior is not numerically integrable for (a_gamma, b_gamma, c_gamma) = (" +
                            std::to_string(a_gamma) + ", " + std::to_string(b_gamma) + ", " +
                            std::to_string(c_gamma) + ")");
    }
  }
}

Eigen::VectorXd HyperParams::resolved_phi_mean(std::size_t p, bool global) const {
  const auto& m = global ? phi_z_mean : phi_mean;
  if (m.size() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  if (static_cast<std::size_t>(m.size()) != p) {
    throw ValidationError(std::string(global ? "phi_z_mean" : "phi_mean") + " has " +
                          std::to_string(m.size()) + " entries, covariates have " + std::to_string(p));
  }
  return m;
}

Eigen::MatrixXd HyperParams::resolved_phi_cov(std::size_t p, bool global) const {
  const auto& c = global ? phi_z_cov : phi_cov;
  const auto n = static_cast<Eigen::Index>(p);
  if (c.size() == 0) return Eigen::MatrixXd::Identity(n, n) * phi_prior_var;
  if (c.rows() != n || c.cols() != n) {
    throw ValidationError(std::string(global ? "phi_z_cov" : "phi_cov") + " must be " +
                          std::to_string(p) + " x " + std::to_string(p));
  }
  return c;
}

std::vector<double> HyperParams::resolved_lambda_prior(std::size_t regimes) const {
  if (lambda_prior.empty()) return std::vector<double>(regimes, 1.0);
  if (lambda_prior.size() != regimes) {
    throw ValidationError("lambda_prior has " + std::to_string(lambda_prior.size()) +
                          " entries, model has " + std::to_string(regimes) + " regimes");
  }
  return lambda_prior;
}

// ---- adaptation and proposals -------------------------------------------

double AdaptState::acceptance_rate() const {
  return iteration == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(iteration);
}

double AdaptState::frozen_acceptance_rate() const {
  return frozen_proposed == 0 ? 0.0
                              : static_cast<double>(frozen_accepted) / static_cast<double>(frozen_proposed);
}

void AdaptState::record(bool was_accepted) {
  ++iteration;
  if (was_accepted) ++accepted;
  if (adapting) {
    const double rate = gain * std::pow(static_cast<double>(iteration), -decay);
    log_step += rate * ((was_accepted ? 1.0 : 0.0) - target);
    log_step = std::clamp(log_step, kMinLogStep, kMaxLogStep);
  } else {
    ++frozen_proposed;
    if (was_accepted) ++frozen_accepted;
  }
}

void note_nan_reject(AdaptState& adapt) {
  ++adapt.nan_rejects;
  if (adapt.nan_rejects == kNanWarnThreshold) {
    std::cerr << "warning: " << kNanWarnThreshold
              << " proposals rejected because the target evaluated to NaN\n";
  }
}

ProposalDraw propose(Rng& rng, double current, Proposal family, double step, double upper) {
  switch (family) {
    case Proposal::normal:
      return {current + step * dist::normal_sample(rng, 0.0, 1.0), 0.0};
    case Proposal::lognormal: {
      const double next = current * std::exp(step * dist::normal_sample(rng, 0.0, 1.0));
      return {next, std::log(next) - std::log(current)};
    }
    case Proposal::truncated_lognormal: {
      // log(next) ~ N(log(current), step^2) truncated above at log(upper)
      const double log_cur = std::log(current);
      const double log_up = std::log(upper);
      const double mass_cur = std::isinf(upper) ? 1.0 : std_normal_cdf((log_up - log_cur) / step);
      double z = std_normal_quantile(uniform_open(rng) * mass_cur);
      double log_next = log_cur + step * z;
      // the quantile can round onto the bound; step back inside
      if (!(log_next < log_up)) log_next = std::nextafter(log_up, kNegInf);
      const double next = std::exp(log_next);
      const double mass_next = std::isinf(upper) ? 1.0 : std_normal_cdf((log_up - log_next) / step);
      return {next, (log_next - log_cur) + std::log(mass_cur) - std::log(mass_next)};
    }
    case Proposal::gamma: {
      const double k = 1.0 / (step * step);
      const double next = dist::gamma_sample(rng, k, current / k);
      if (!(next > 0.0)) return {next, 0.0};
      return {next, dist::gamma_logpdf(current, k, next / k) - dist::gamma_logpdf(next, k, current / k)};
    }
  }
  throw DomainError("propose: unknown proposal family");
}

// ---- ARG parameters ------------------------------------------------------

ArgPriors series_arg_priors(const HyperParams& h) {
  return {h.a_alpha, h.b_alpha, h.a_beta, h.b_beta, {h.a_delta, h.b_delta, h.tau}};
}

ArgPriors global_arg_priors(const HyperParams& h) {
  return {h.a_alpha_w, h.b_alpha_w, h.a_beta_w, h.b_beta_w, {h.a_delta_w, h.b_delta_w, h.tau_w}};
}

double arg_log_target(ArgComponent which, double value, const ArgParams& current, double initial,
                      const std::vector<double>& path, const ArgPriors& priors, double tol) {
  if (!positive_finite(value)) return kNegInf;
  ArgParams arg = current;
  double prior = 0.0;
  switch (which) {
    case ArgComponent::alpha:
      arg.alpha = value;
      prior = dist::gamma_logpdf(value, priors.a_alpha, priors.b_alpha);
      break;
    case ArgComponent::beta:
      arg.beta = value;
      prior = dist::gamma_logpdf(value, priors.a_beta, priors.b_beta);
      break;
    case ArgComponent::delta:
      arg.delta = value;
      prior = dist::trunc_gamma_logpdf(value, priors.delta);
      break;
  }
  if (!std::isfinite(prior)) return prior;
  // the day-0 value is drawn from the parameter-dependent initial law, so its
  // density belongs to the conditional as well
  const auto init = initial_law(arg);
  return prior + dist::gamma_logpdf(initial, init.shape, init.scale) +
         arg_transition_loglik(arg, initial, path, tol);
}

ArgParams sample_arg_params(Rng& rng, double initial, const std::vector<double>& path,
                            const ArgPriors& priors, const ArgParams& current, ArgAdapt& adapt,
                            double tol) {
  ArgParams arg = current;
  auto target = [&](ArgComponent which) {
    return [&, which](double v) { return arg_log_target(which, v, arg, initial, path, priors, tol); };
  };
  arg.alpha = arwmh_step(rng, arg.alpha, target(ArgComponent::alpha), Proposal::lognormal, adapt.alpha).value;
  arg.beta = arwmh_step(rng, arg.beta, target(ArgComponent::beta), Proposal::lognormal, adapt.beta).value;
  arg.delta = arwmh_step(rng, arg.delta, target(ArgComponent::delta), Proposal::truncated_lognormal,
                         adapt.delta, priors.delta.upper)
                  .value;
  return arg;
}

// ---- jump layer ----------------------------------------------------------

double sample_eta(Rng& rng, double xi, double gamma, const HyperParams& h) {
  const double shape = h.a_eta + gamma * (h.c_gamma + 1.0);
  const double scale = h.b_eta / (1.0 + h.b_eta * xi);
  return dist::gamma_sample(rng, shape, scale);
}

double sample_gamma_shape(Rng& rng, double eta, double xi, const HyperParams& h) {
  return dist::gamma_shape_conjugate_sample(rng, h.a_gamma, h.b_gamma, h.c_gamma, eta, xi);
}

XiData xi_data(std::size_t j, const CountPanel& panel, const StaticParams& theta,
               const LatentPaths& paths, int regime) {
  const auto ej = covariate_terms(panel.covariates.at(j), theta.series.at(j).phi);
  XiData d;
  for (std::size_t t = 0; t < panel.days(); ++t) {
    if (paths.s[j][t] != regime) continue;
    d.counts.push_back(panel.y[j][t]);
    d.latent.push_back(paths.x[j][t]);
    // remainder = w + exp(v'phi): everything in the intensity not scaled by (1 + xi)
    d.remainder.push_back(paths.w[t] + ej[t]);
  }
  return d;
}

double xi_log_target(double xi, const XiData& data, double gamma, double eta) {
  if (!positive_finite(xi)) return kNegInf;
  double sum_x = 0.0;
  double obs = 0.0;
  for (std::size_t i = 0; i < data.counts.size(); ++i) {
    sum_x += data.latent[i];
    if (data.counts[i] > 0) {
      obs += static_cast<double>(data.counts[i]) * std::log(data.remainder[i] + data.latent[i] * (1.0 + xi));
    }
  }
  return (gamma - 1.0) * std::log(xi) - xi * (eta + sum_x) + obs;
}

double sample_xi(Rng& rng, double current, const XiData& data, double gamma, double eta,
                 AdaptState& adapt) {
  if (data.empty()) return dist::gamma_sample(rng, gamma, 1.0 / eta);
  auto target = [&](double v) { return xi_log_target(v, data, gamma, eta); };
  return arwmh_step(rng, current, target, Proposal::gamma, adapt).value;
}

// ---- covariate coefficients ---------------------------------------------

GaussianPrior gaussian_prior(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw ValidationError("coefficient prior: mean and covariance sizes disagree");
  }
  if (mean.size() == 0) return {mean, cov};
  if (!cov.isApprox(cov.transpose(), 1e-12)) {
    throw ValidationError("coefficient prior covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("coefficient prior covariance is not positive definite");
  }
  return {mean, llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()))};
}

namespace {

double phi_target_from_linear(const Eigen::VectorXd& phi, const Eigen::VectorXd& linear,
                              const PhiData& data, const GaussianPrior& prior) {
  const Eigen::VectorXd d = phi - prior.mean;
  double lt = -0.5 * d.dot(prior.precision * d);
  for (std::size_t t = 0; t < data.counts.size(); ++t) {
    const double e = std::exp(linear[static_cast<Eigen::Index>(t)]);
    if (!std::isfinite(e)) return std::numeric_limits<double>::quiet_NaN();
    const double lambda = data.baseline[t] + e;
    if (data.counts[t] > 0) lt += static_cast<double>(data.counts[t]) * std::log(lambda);
    lt -= e;
  }
  return lt;
}

}  // namespace

double phi_log_target(const Eigen::VectorXd& phi, const PhiData& data, const GaussianPrior& prior) {
  if (phi.size() == 0) return 0.0;
  return phi_target_from_linear(phi, (*data.covariates) * phi, data, prior);
}

Eigen::VectorXd sample_phi(Rng& rng, const Eigen::VectorXd& current, const PhiData& data,
                           const GaussianPrior& prior, std::vector<AdaptState>& adapt) {
  const Eigen::Index p = current.size();
  if (p == 0) return current;
  if (static_cast<Eigen::Index>(adapt.size()) != p) {
    throw DomainError("sample_phi: one adaptation state per coefficient required");
  }
  const Eigen::MatrixXd& v = *data.covariates;
  Eigen::VectorXd phi = current;
  Eigen::VectorXd linear = v * phi;
  for (Eigen::Index k = 0; k < p; ++k) {
    auto target = [&](double value) {
      Eigen::VectorXd trial = phi;
      trial[k] = value;
      return phi_target_from_linear(trial, linear + v.col(k) * (value - phi[k]), data, prior);
    };
    const auto res = arwmh_step(rng, phi[k], target, Proposal::normal, adapt[static_cast<std::size_t>(k)]);
    if (res.accepted) {
      linear += v.col(k) * (res.value - phi[k]);
      phi[k] = res.value;
    }
  }
  return phi;
}

// ---- regime chain --------------------------------------------------------

Eigen::MatrixXd sample_lambda(Rng& rng, int s_initial, const std::vector<int>& s,
                              const std::vector<double>& prior) {
  const std::size_t L = prior.size();
  const auto counts = transition_counts(s_initial, s, L);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
  std::vector<double> conc(L);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < L; ++k) {
      conc[k] = prior[k] + counts(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
    }
    const auto row = dist::dirichlet_sample(rng, conc);
    for (std::size_t k = 0; k < L; ++k) out(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = row[k];
  }
  return out;
}

// ---- configuration -------------------------------------------------------

void McmcConfig::validate() const {
  if (sweeps == 0) throw ValidationError("sweeps must be positive");
  if (burnin >= sweeps) throw ValidationError("burnin must be smaller than sweeps");
  if (thin == 0) throw ValidationError("thin must be at least 1");
  if (path_thin == 0) throw ValidationError("path_thin must be at least 1");
  if (particles < 2) throw ValidationError("particles must be at least 2");
  if (filter_retries < 0) throw ValidationError("filter_retries must be nonnegative");
  if (!positive_finite(adapt_gain)) throw ValidationError("adapt_gain must be positive");
  if (!(adapt_decay > 0.5 && adapt_decay <= 1.0)) throw ValidationError("adapt_decay must lie in (0.5, 1]");
  if (!positive_finite(initial_step)) throw ValidationError("initial_step must be positive");
  if (!(ncga_tol > 0.0 && ncga_tol <= 1e-6)) throw ValidationError("ncga_tol must lie in (0, 1e-6]");
}

std::size_t McmcConfig::retained() const { return (sweeps - burnin + thin - 1) / thin; }

// ---- summaries -----------------------------------------------------------

void PosteriorSummary::reset(std::size_t T, std::size_t J, std::size_t L) {
  draws = 0;
  w.assign(T, 0.0);
  x.assign(J, std::vector<double>(T, 0.0));
  amplification.assign(J, std::vector<double>(T, 0.0));
  covariate.assign(J, std::vector<double>(T, 0.0));
  global_covariate.assign(T, 0.0);
  regime_prob.assign(J, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(L)));
}

void PosteriorSummary::add(const CountPanel& panel, const StaticParams& theta, const LatentPaths& paths) {
  const std::size_t T = panel.days();
  ++draws;
  const auto ez = covariate_terms(panel.global_covariates, theta.global.phi);
  for (std::size_t t = 0; t < T; ++t) {
    w[t] += paths.w[t];
    global_covariate[t] += ez[t];
  }
  for (std::size_t j = 0; j < panel.series(); ++j) {
    const auto& sp = theta.series[j];
    const auto ej = covariate_terms(panel.covariates[j], sp.phi);
    for (std::size_t t = 0; t < T; ++t) {
      const int s = paths.s[j][t];
      x[j][t] += paths.x[j][t];
      amplification[j][t] += paths.x[j][t] * sp.xi[static_cast<std::size_t>(s)];
      covariate[j][t] += ej[t];
      regime_prob[j](static_cast<Eigen::Index>(t), s) += 1.0;
    }
  }
}

PosteriorSummary PosteriorSummary::means() const {
  PosteriorSummary m = *this;
  if (draws == 0) return m;
  const double n = static_cast<double>(draws);
  auto scale = [n](std::vector<double>& v) {
    for (double& e : v) e /= n;
  };
  scale(m.w);
  scale(m.global_covariate);
  for (auto& v : m.x) scale(v);
  for (auto& v : m.amplification) scale(v);
  for (auto& v : m.covariate) scale(v);
  for (auto& r : m.regime_prob) r /= n;
  return m;
}

// ---- Gibbs sampler -------------------------------------------------------

GibbsSampler::GibbsSampler(const CountPanel& panel, HyperParams hyper, McmcConfig cfg)
    : panel_(panel), hyper_(std::move(hyper)), cfg_(cfg) {
  panel_.validate();
  hyper_.validate();
  cfg_.validate();
  hyper_.resolved_phi_mean(static_cast<std::size_t>(panel_.global_covariates.cols()), true);
  hyper_.resolved_phi_cov(static_cast<std::size_t>(panel_.global_covariates.cols()), true);
}

pf::FilterConfig GibbsSampler::filter_config() const {
  pf::FilterConfig f;
  f.particles = cfg_.particles;
  f.max_retries = cfg_.filter_retries;
  f.backend = cfg_.backend;
  return f;
}

GibbsState GibbsSampler::initial_state() const {
  const std::size_t T = panel_.days();
  const std::size_t J = panel_.series();
  const std::size_t L = 2;
  GibbsState st;
  st.theta.global.phi = Eigen::VectorXd::Zero(panel_.global_covariates.cols());
  const auto ez = covariate_terms(panel_.global_covariates, st.theta.global.phi);
  st.paths.w.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    st.paths.w[t] = std::max(static_cast<double>(panel_.z[t]) - ez[t], 0.5);
  }
  st.paths.w_initial = st.paths.w.front();
  st.theta.global.arg = starting_arg(mean_of(st.paths.w), hyper_.tau_w);

  st.paths.x.assign(J, std::vector<double>(T));
  st.paths.x_initial.resize(J);
  st.paths.s.assign(J, std::vector<int>(T, 0));
  st.paths.s_initial.assign(J, 0);
  st.theta.series.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    auto& sp = st.theta.series[j];
    sp.phi = Eigen::VectorXd::Zero(panel_.covariates[j].cols());
    hyper_.resolved_phi_mean(static_cast<std::size_t>(sp.phi.size()), false);
    hyper_.resolved_phi_cov(static_cast<std::size_t>(sp.phi.size()), false);
    const auto ej = covariate_terms(panel_.covariates[j], sp.phi);
    for (std::size_t t = 0; t < T; ++t) {
      st.paths.x[j][t] = std::max(static_cast<double>(panel_.y[j][t]) - st.paths.w[t] - ej[t], 0.5);
    }
    st.paths.x_initial[j] = st.paths.x[j].front();
    sp.arg = starting_arg(mean_of(st.paths.x[j]), hyper_.tau);
    sp.xi = {0.0, 1.0};
    sp.transition = Eigen::MatrixXd::Constant(L, L, 0.1 / static_cast<double>(L - 1));
    sp.transition.diagonal().setConstant(0.9);
    sp.eta = 1.0;
    sp.gamma = 1.0;
  }
  hyper_.resolved_lambda_prior(L);

  st.global_adapt.arg = fresh_arg_adapt(cfg_);
  st.global_adapt.phi.assign(static_cast<std::size_t>(st.theta.global.phi.size()), fresh_adapt(cfg_));
  st.series_adapt.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    st.series_adapt[j].arg = fresh_arg_adapt(cfg_);
    st.series_adapt[j].xi = fresh_adapt(cfg_);
    st.series_adapt[j].phi.assign(static_cast<std::size_t>(st.theta.series[j].phi.size()), fresh_adapt(cfg_));
  }
  st.sums.reset(T, J, L);
  return st;
}

void GibbsSampler::update_global(GibbsState& st, Rng& rng) const {
  const auto& b = cfg_.blocks;
  if (b.global_latent) {
    auto out = pf::sm_filter_global(panel_, st.theta, st.paths, rng, filter_config());
    st.paths.w_initial = out.initial;
    st.paths.w = std::move(out.path);
  }
  if (b.global_arg) {
    st.theta.global.arg = sample_arg_params(rng, st.paths.w_initial, st.paths.w, global_arg_priors(hyper_),
                                            st.theta.global.arg, st.global_adapt.arg, cfg_.ncga_tol);
  }
  if (b.global_phi && st.theta.global.phi.size() > 0) {
    const auto p = static_cast<std::size_t>(st.theta.global.phi.size());
    PhiData data{panel_.z, &panel_.global_covariates, st.paths.w};
    const auto prior = gaussian_prior(hyper_.resolved_phi_mean(p, true), hyper_.resolved_phi_cov(p, true));
    st.theta.global.phi = sample_phi(rng, st.theta.global.phi, data, prior, st.global_adapt.phi);
  }
}

void GibbsSampler::update_series(GibbsState& st, std::size_t j, Rng& rng) const {
  const auto& b = cfg_.blocks;
  auto& sp = st.theta.series[j];
  auto& adapt = st.series_adapt[j];
  const std::size_t T = panel_.days();

  if (b.local_latent) {
    auto out = pf::sm_filter_local(j, panel_, st.theta, st.paths, rng, filter_config());
    st.paths.x_initial[j] = out.initial;
    st.paths.x[j] = std::move(out.path);
  }
  if (b.regimes) {
    const auto emissions = ffbs::emission_logmatrix(j, panel_, st.theta, st.paths);
    const auto init = stationary_distribution(sp.transition);
    auto post = ffbs::ffbs_sample(rng, emissions, sp.transition, init);
    st.paths.s_initial[j] = post.initial;
    st.paths.s[j] = std::move(post.path);
  }
  if (b.transition) {
    sp.transition = sample_lambda(rng, st.paths.s_initial[j], st.paths.s[j],
                                  hyper_.resolved_lambda_prior(sp.xi.size()));
  }
  if (b.jump) {
    double& xi = sp.xi[1];
    sp.eta = sample_eta(rng, xi, sp.gamma, hyper_);
    sp.gamma = sample_gamma_shape(rng, sp.eta, xi, hyper_);
    xi = sample_xi(rng, xi, xi_data(j, panel_, st.theta, st.paths, 1), sp.gamma, sp.eta, adapt.xi);
  }
  if (b.local_arg) {
    sp.arg = sample_arg_params(rng, st.paths.x_initial[j], st.paths.x[j], series_arg_priors(hyper_), sp.arg,
                               adapt.arg, cfg_.ncga_tol);
  }
  if (b.local_phi && sp.phi.size() > 0) {
    const auto p = static_cast<std::size_t>(sp.phi.size());
    PhiData data{panel_.y[j], &panel_.covariates[j], std::vector<double>(T)};
    for (std::size_t t = 0; t < T; ++t) {
      data.baseline[t] = st.paths.w[t] + st.paths.x[j][t] * (1.0 + sp.xi[static_cast<std::size_t>(st.paths.s[j][t])]);
    }
    const auto prior = gaussian_prior(hyper_.resolved_phi_mean(p, false), hyper_.resolved_phi_cov(p, false));
    sp.phi = sample_phi(rng, sp.phi, data, prior, adapt.phi);
  }
}

void GibbsSampler::sweep(GibbsState& state) const {
  // work on a copy so a failed sweep leaves the caller's state untouched
  GibbsState st = state;
  const std::size_t index = st.sweeps_done;
  if (st.theta.regimes() != 2) {
    throw ValidationError("the Gibbs sampler supports exactly two regimes per series");
  }
  if (index == cfg_.burnin) freeze_all(st);

  auto is_degeneracy = [](const std::exception_ptr& e) {
    try {
      std::rethrow_exception(e);
    } catch (const FilterDegeneracyError&) {
      return true;
    } catch (...) {
      return false;
    }
  };
  auto message = [](const std::exception_ptr& e) -> std::string {
    try {
      std::rethrow_exception(e);
    } catch (const std::exception& ex) {
      return ex.what();
    } catch (...) {
      return "unknown error";
    }
  };

  try {
    Rng rng = make_stream(cfg_.seed, {index, 0});
    update_global(st, rng);
  } catch (const std::exception& ex) {
    throw SweepError(index, std::string("global block: ") + ex.what(),
                     dynamic_cast<const FilterDegeneracyError*>(&ex) != nullptr);
  }

  const std::size_t J = panel_.series();
  std::vector<std::exception_ptr> errors(J);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t j = 0; j < J; ++j) {
    try {
      Rng rng = make_stream(cfg_.seed, {index, j + 1});
      update_series(st, j, rng);
    } catch (...) {
      errors[j] = std::current_exception();
    }
  }
  for (std::size_t j = 0; j < J; ++j) {
    if (errors[j]) {
      throw SweepError(index, "series " + std::to_string(j + 1) + ": " + message(errors[j]),
                       is_degeneracy(errors[j]));
    }
  }
  st.sweeps_done = index + 1;
  state = std::move(st);
}

void GibbsSampler::run(GibbsState& st, const DrawSink& sink, std::size_t stop_after) const {
  while (st.sweeps_done < cfg_.sweeps && st.sweeps_done < stop_after) {
    const std::size_t index = st.sweeps_done;
    sweep(st);
    if (index < cfg_.burnin || (index - cfg_.burnin) % cfg_.thin != 0) continue;
    DrawRecord rec;
    rec.sweep = index;
    rec.theta = st.theta;
    if (st.retained_done % cfg_.path_thin == 0) rec.paths = st.paths;
    rec.loglik = complete_data_loglik(panel_, st.paths, st.theta, cfg_.ncga_tol);
    st.sums.add(panel_, st.theta, st.paths);
    ++st.retained_done;
    if (sink) sink(rec, st);
  }
}

PosteriorDraws run_gibbs(const CountPanel& panel, const HyperParams& hyper, const McmcConfig& cfg) {
  GibbsSampler sampler(panel, hyper, cfg);
  auto st = sampler.initial_state();
  PosteriorDraws out;
  out.records.reserve(cfg.retained());
  sampler.run(st, [&](const DrawRecord& r, const GibbsState&) { out.records.push_back(r); });
  out.summary = st.sums.means();
  return out;
}

std::vector<double> delta_near_bound(const std::vector<DrawRecord>& records, const HyperParams& h) {
  if (records.empty()) return {};
  const std::size_t J = records.front().theta.series.size();
  std::vector<double> frac(J + 1, 0.0);
  for (const auto& r : records) {
    for (std::size_t j = 0; j < J; ++j) {
      if (r.theta.series[j].arg.delta > 0.99 * h.tau) frac[j] += 1.0;
    }
    if (r.theta.global.arg.delta > 0.99 * h.tau_w) frac[J] += 1.0;
  }
  for (double& f : frac) f /= static_cast<double>(records.size());
  return frac;
}

}  // namespace argpois::mcmc
