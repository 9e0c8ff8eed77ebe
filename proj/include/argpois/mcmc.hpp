#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "argpois/distributions.hpp"
#include "argpois/model.hpp"
#include "argpois/particle_filter.hpp"
#include "argpois/rng.hpp"

/// Particle-filter-within-Gibbs sampler and its single-site updates.
namespace argpois::mcmc {

/// Fixed prior hyper-parameters. Gamma priors are shape/scale.
struct HyperParams {
  // jump hyper-layer. With eta and gamma integrated out the prior on xi is
  // proper iff b_gamma > c_gamma, or b_gamma == c_gamma and
  // a_gamma (c_gamma b_eta)^c_gamma < 1; a_gamma = 1 would put a pole at xi = 1.
  double a_eta = 1.0, b_eta = 1.0;
  double a_gamma = 0.5, b_gamma = 1.0, c_gamma = 1.0;
  // ARG priors, per series
  double a_alpha = 1.0, b_alpha = 1.0;
  double a_beta = 1.0, b_beta = 1.0;
  double a_delta = 2.0, b_delta = 2.0;
  double tau = 1.0;
  // ARG priors, global
  double a_alpha_w = 1.0, b_alpha_w = 1.0;
  double a_beta_w = 1.0, b_beta_w = 1.0;
  double a_delta_w = 2.0, b_delta_w = 2.0;
  double tau_w = 1.0;
  // coefficient priors; empty mean/cov resolve to 0 and phi_prior_var * I
  Eigen::VectorXd phi_mean, phi_z_mean;
  Eigen::MatrixXd phi_cov, phi_z_cov;
  double phi_prior_var = 4.0;
  // Dirichlet concentration for every row of every transition matrix; empty = ones
  std::vector<double> lambda_prior;

  /// Throws ValidationError; rejects jump hyper-parameters that leave the
  /// prior on xi improper, and checks numerically that the gamma-shape prior
  /// is integrable for the chosen (a_gamma, b_gamma, c_gamma).
  void validate() const;
  Eigen::VectorXd resolved_phi_mean(std::size_t p, bool global) const;
  Eigen::MatrixXd resolved_phi_cov(std::size_t p, bool global) const;
  std::vector<double> resolved_lambda_prior(std::size_t regimes) const;
};

/// Robbins-Monro adaptation of a log step size toward a target acceptance rate:
///   log(step) += gain * i^(-decay) * (accepted - target).
struct AdaptState {
  double log_step = std::log(0.1);
  double target = 0.30;
  double gain = 1.0;
  double decay = 0.6;
  bool adapting = true;
  std::uint64_t iteration = 0;
  std::uint64_t accepted = 0;
  std::uint64_t nan_rejects = 0;
  // counters since the adaptation was frozen
  std::uint64_t frozen_proposed = 0;
  std::uint64_t frozen_accepted = 0;

  double step() const { return std::exp(log_step); }
  double acceptance_rate() const;
  double frozen_acceptance_rate() const;
  void record(bool was_accepted);
  void freeze() { adapting = false; }
};

enum class Proposal { normal, lognormal, truncated_lognormal, gamma };

struct ProposalDraw {
  double value;
  double log_correction;  // log q(current | value) - log q(value | current)
};

/// Draws a proposal around `current` with spread `step`. `upper` bounds the
/// truncated-lognormal family only.
ProposalDraw propose(Rng& rng, double current, Proposal family, double step,
                     double upper = std::numeric_limits<double>::infinity());

struct StepResult {
  double value;
  bool accepted;
};

/// Warns once on stderr when NaN proposals keep being rejected.
void note_nan_reject(AdaptState& adapt);

/// One adaptive random-walk Metropolis-Hastings step. A NaN target at the
/// proposal counts as a rejection.
template <class Target>
StepResult arwmh_step(Rng& rng, double current, Target&& log_target, Proposal family,
                      AdaptState& adapt, double upper = std::numeric_limits<double>::infinity()) {
  const auto prop = propose(rng, current, family, adapt.step(), upper);
  const double lt_new = log_target(prop.value);
  bool accept = false;
  if (std::isnan(lt_new)) {
    note_nan_reject(adapt);
  } else if (lt_new > -std::numeric_limits<double>::infinity()) {
    const double lt_cur = log_target(current);
    const double log_ratio = lt_new - lt_cur + prop.log_correction;
    accept = log_ratio >= 0.0 || std::log(uniform_open(rng)) < log_ratio;
  }
  adapt.record(accept);
  return {accept ? prop.value : current, accept};
}

// ---- single-site updates -------------------------------------------------

struct ArgPriors {
  double a_alpha, b_alpha;
  double a_beta, b_beta;
  dist::TruncGammaParams delta;
};
ArgPriors series_arg_priors(const HyperParams& h);
ArgPriors global_arg_priors(const HyperParams& h);

struct ArgAdapt {
  AdaptState alpha, beta, delta;
};

/// Log prior of one ARG parameter plus the transition log-likelihood of the path.
enum class ArgComponent { alpha, beta, delta };
double arg_log_target(ArgComponent which, double value, const ArgParams& current, double initial,
                      const std::vector<double>& path, const ArgPriors& priors, double tol);

/// Sequential aRWMH updates of alpha (lognormal), beta (lognormal) and delta
/// (lognormal truncated to (0, tau)).
ArgParams sample_arg_params(Rng& rng, double initial, const std::vector<double>& path,
                            const ArgPriors& priors, const ArgParams& current, ArgAdapt& adapt,
                            double tol = dist::kDefaultSeriesTol);

/// Exact draw from Gamma(a_eta + gamma (c_gamma + 1), scale b_eta / (1 + b_eta xi)).
double sample_eta(Rng& rng, double xi, double gamma, const HyperParams& h);

double sample_gamma_shape(Rng& rng, double eta, double xi, const HyperParams& h);

/// Regime-2 days of one series: counts, x_{j,t}, and the non-amplified
/// remainder w_t + exp(v_{j,t}' phi_j) of the intensity.
struct XiData {
  std::vector<std::int64_t> counts;
  std::vector<double> latent;
  std::vector<double> remainder;

  bool empty() const { return counts.empty(); }
};

XiData xi_data(std::size_t j, const CountPanel& panel, const StaticParams& theta,
               const LatentPaths& paths, int regime = 1);

/// log of xi^(gamma-1) exp(-xi (eta + sum x)) prod (remainder + x (1 + xi))^y.
double xi_log_target(double xi, const XiData& data, double gamma, double eta);

/// Exact Gamma(gamma, scale 1/eta) draw when no day is in regime 2, else one
/// aRWMH step with a Gamma proposal.
double sample_xi(Rng& rng, double current, const XiData& data, double gamma, double eta,
                 AdaptState& adapt);

/// Counts observed with intensity baseline_t + exp(v_t' phi).
struct PhiData {
  std::vector<std::int64_t> counts;
  const Eigen::MatrixXd* covariates = nullptr;
  std::vector<double> baseline;
};

struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
};
GaussianPrior gaussian_prior(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

double phi_log_target(const Eigen::VectorXd& phi, const PhiData& data, const GaussianPrior& prior);

/// One element-wise sweep of Normal-proposal aRWMH updates over phi.
Eigen::VectorXd sample_phi(Rng& rng, const Eigen::VectorXd& current, const PhiData& data,
                           const GaussianPrior& prior, std::vector<AdaptState>& adapt);

/// Each row l drawn from Dirichlet(prior + N_l.(S)).
Eigen::MatrixXd sample_lambda(Rng& rng, int s_initial, const std::vector<int>& s,
                              const std::vector<double>& prior);

// ---- the Gibbs sampler ---------------------------------------------------

/// Blocks updated in a sweep; switching one off holds it at its current value.
struct BlockMask {
  bool global_latent = true;
  bool global_arg = true;
  bool global_phi = true;
  bool local_latent = true;
  bool regimes = true;
  bool transition = true;
  bool jump = true;
  bool local_arg = true;
  bool local_phi = true;
};

struct McmcConfig {
  std::size_t sweeps = 20000;   // total, burn-in included
  std::size_t burnin = 4000;
  std::size_t thin = 1;
  std::size_t path_thin = 10;   // latent paths stored every path_thin retained draws
  std::size_t particles = 1000;
  int filter_retries = 2;
  std::uint64_t seed = 1;
  double adapt_gain = 1.0;
  double adapt_decay = 0.6;
  double initial_step = 0.1;
  double ncga_tol = dist::kDefaultSeriesTol;
  pf::Backend backend = pf::Backend::openmp;
  BlockMask blocks;

  void validate() const;
  std::size_t retained() const;
};

struct SeriesAdapt {
  ArgAdapt arg;
  AdaptState xi;
  std::vector<AdaptState> phi;
};

struct GlobalAdapt {
  ArgAdapt arg;
  std::vector<AdaptState> phi;
};

/// Running posterior sums over every retained sweep.
struct PosteriorSummary {
  std::size_t draws = 0;
  std::vector<double> w;                            // T
  std::vector<std::vector<double>> x;               // J x T
  std::vector<std::vector<double>> amplification;   // J x T, x * xi_s
  std::vector<std::vector<double>> covariate;       // J x T, exp(v' phi)
  std::vector<double> global_covariate;             // T
  std::vector<Eigen::MatrixXd> regime_prob;         // J entries, T x L

  void reset(std::size_t T, std::size_t J, std::size_t L);
  void add(const CountPanel& panel, const StaticParams& theta, const LatentPaths& paths);
  /// Means (sums divided by the draw count).
  PosteriorSummary means() const;
};

struct GibbsState {
  StaticParams theta;
  LatentPaths paths;
  GlobalAdapt global_adapt;
  std::vector<SeriesAdapt> series_adapt;
  std::size_t sweeps_done = 0;
  std::size_t retained_done = 0;
  PosteriorSummary sums;
};

struct DrawRecord {
  std::size_t sweep = 0;
  StaticParams theta;
  std::optional<LatentPaths> paths;
  double loglik = 0.0;
};

struct PosteriorDraws {
  std::vector<DrawRecord> records;
  PosteriorSummary summary;  // means over all retained sweeps
};

class GibbsSampler {
 public:
  GibbsSampler(const CountPanel& panel, HyperParams hyper, McmcConfig cfg);

  /// Deterministic starting point derived from the data.
  GibbsState initial_state() const;

  /// One full sweep: block (1) W, ARG_w, phi_z; then block (2) for each
  /// series X_j, S_j, Lambda_j, (eta_j, gamma_j, xi_j), ARG_j, phi_j.
  /// On failure throws SweepError and leaves `state` unchanged.
  void sweep(GibbsState& state) const;

  using DrawSink = std::function<void(const DrawRecord&, const GibbsState&)>;
  /// Sweeps until `cfg.sweeps` are done or `stop_after` sweeps have been run
  /// in total; every retained draw goes to `sink`.
  void run(GibbsState& state, const DrawSink& sink,
           std::size_t stop_after = std::numeric_limits<std::size_t>::max()) const;

  const McmcConfig& config() const { return cfg_; }
  const HyperParams& hyper() const { return hyper_; }
  const CountPanel& panel() const { return panel_; }

 private:
  void update_global(GibbsState& state, Rng& rng) const;
  void update_series(GibbsState& state, std::size_t j, Rng& rng) const;
  pf::FilterConfig filter_config() const;

  const CountPanel& panel_;
  HyperParams hyper_;
  McmcConfig cfg_;
};

PosteriorDraws run_gibbs(const CountPanel& panel, const HyperParams& hyper, const McmcConfig& cfg);

/// Fraction of retained delta draws within 1% of the truncation bound, per
/// series (global last).
std::vector<double> delta_near_bound(const std::vector<DrawRecord>& records, const HyperParams& h);

}  // namespace argpois::mcmc
