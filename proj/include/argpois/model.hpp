#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "argpois/distributions.hpp"

namespace argpois {

/// Observed counts: J country series y and one global series z over T days.
/// Covariate matrices are T x p; p = 0 means the series has no covariate term.
struct CountPanel {
  std::vector<std::string> dates;                  // optional, ISO-8601
  std::vector<std::vector<std::int64_t>> y;        // J x T
  std::vector<std::int64_t> z;                     // T
  std::vector<Eigen::MatrixXd> covariates;         // J entries, each T x p_j
  Eigen::MatrixXd global_covariates;               // T x p_z
  std::vector<double> rescale;                     // J factors applied at ingestion
  double global_rescale = 1.0;

  std::size_t days() const { return z.size(); }
  std::size_t series() const { return y.size(); }
  /// Replaces missing covariate matrices with T x 0 blocks.
  void fill_empty_covariates();
  void validate() const;
};

/// Latent paths. Regime labels are 0-based internally (0 = no amplification).
/// Index t in the vectors corresponds to day t + 1; the *_initial members hold day 0.
struct LatentPaths {
  double w_initial = 1.0;
  std::vector<double> w;                     // T
  std::vector<double> x_initial;             // J
  std::vector<std::vector<double>> x;        // J x T
  std::vector<int> s_initial;                // J
  std::vector<std::vector<int>> s;           // J x T

  void validate(std::size_t regimes) const;
};

struct ArgParams {
  double alpha = 1.0;
  double beta = 0.5;
  double delta = 0.5;

  bool stationary() const { return beta * delta < 1.0; }
  double persistence() const { return beta * delta; }
  dist::NcGaParams transition(double previous) const { return {alpha, beta * previous, delta}; }
};

struct SeriesParams {
  ArgParams arg;
  std::vector<double> xi;            // L entries, xi[0] = 0
  Eigen::VectorXd phi;               // p_j
  Eigen::MatrixXd transition;        // L x L, row-stochastic
  double eta = 1.0;
  double gamma = 1.0;
};

struct GlobalParams {
  ArgParams arg;
  Eigen::VectorXd phi;               // p_z
};

struct StaticParams {
  GlobalParams global;
  std::vector<SeriesParams> series;

  std::size_t regimes() const { return series.empty() ? 2 : series.front().xi.size(); }
  /// With `allow_zero_jump`, xi need only be nondecreasing (a switched-off jump).
  void validate(bool allow_zero_jump = false) const;
};

/// exp(v_t' phi), or 0 when there are no covariates.
double covariate_term(const Eigen::MatrixXd& v, const Eigen::VectorXd& phi, std::size_t t);
std::vector<double> covariate_terms(const Eigen::MatrixXd& v, const Eigen::VectorXd& phi);

/// w_t + x_{j,t} (1 + xi_{j,s_{j,t}}) + exp(v_{j,t}' phi_j); t is 0-based.
double intensity(std::size_t j, std::size_t t, const StaticParams& theta, const LatentPaths& paths,
                 const CountPanel& panel);
/// w_t + exp(v_{z,t}' phi_z).
double global_intensity(std::size_t t, const StaticParams& theta, const LatentPaths& paths,
                        const CountPanel& panel);

/// N_lk = number of (l -> k) moves along s_initial, s_1, ..., s_T.
Eigen::MatrixXi transition_counts(int s_initial, const std::vector<int>& s, std::size_t regimes);

/// Left eigenvector of a row-stochastic matrix, normalized to the simplex.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

/// Law of the day-0 latent: the ARG stationary Gamma(alpha, delta / (1 - beta delta))
/// when beta delta < 1, else Gamma(alpha, delta).
struct InitialLaw {
  double shape;
  double scale;
};
InitialLaw initial_law(const ArgParams& arg);

/// Sum over t = 1..T of log NcGa(path_t | alpha, beta path_{t-1}, delta).
double arg_transition_loglik(const ArgParams& arg, double initial, const std::vector<double>& path,
                             double tol = dist::kDefaultSeriesTol);

struct SeriesLoglik {
  double transition = 0.0;
  double observation = 0.0;
  double chain = 0.0;
  double total() const { return transition + observation + chain; }
};

struct LoglikBreakdown {
  double global_transition = 0.0;
  double global_observation = 0.0;
  std::vector<SeriesLoglik> series;
  std::string diagnostic;  // set when a zero intensity meets a positive count

  double total() const;
};

LoglikBreakdown complete_data_loglik_parts(const CountPanel& panel, const LatentPaths& paths,
                                           const StaticParams& theta,
                                           double tol = dist::kDefaultSeriesTol);

/// Complete-data log-likelihood: ARG transitions for w and every x_j, Poisson
/// observations for z and every y_j, and the regime-chain terms
/// sum_lk N_lk log lambda_lk + log p(s_0 | Lambda) with p the stationary law.
double complete_data_loglik(const CountPanel& panel, const LatentPaths& paths,
                            const StaticParams& theta, double tol = dist::kDefaultSeriesTol);

}  // namespace argpois
