#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "argpois/mcmc.hpp"
#include "argpois/model.hpp"

namespace argpois::analysis {

/// Per (j, t) shares of the four intensity components. Each row sums to 1.
struct Decomposition {
  // J x T each
  std::vector<std::vector<double>> local;
  std::vector<std::vector<double>> amplification;
  std::vector<std::vector<double>> global;
  std::vector<std::vector<double>> covariates;
};

struct ComponentValues {
  double local;
  double amplification;
  double global;
  double covariates;
};

/// Shares of one intensity; throws DomainError if every component is zero.
ComponentValues component_shares(const ComponentValues& v);

/// Shares from a single parameter/path draw.
Decomposition decompose_draw(const CountPanel& panel, const StaticParams& theta, const LatentPaths& paths);

/// Shares computed per stored draw, then averaged. Only draws carrying latent
/// paths contribute; throws DomainError if there are none.
Decomposition decompose(const std::vector<mcmc::DrawRecord>& draws, const CountPanel& panel);

struct Episode {
  std::size_t start;  // 0-based day index
  std::size_t end;    // inclusive
  std::size_t duration() const { return end - start + 1; }
};

struct RegimeReport {
  std::vector<double> prob;        // P(amplified) per day
  std::vector<bool> flagged;
  std::vector<Episode> episodes;
  std::vector<std::size_t> durations;
};

/// Days with P(regime 2) > threshold form maximal runs.
RegimeReport regime_report(const std::vector<double>& amplified_prob, double threshold = 0.5);
std::vector<RegimeReport> regime_report(const mcmc::PosteriorSummary& means, double threshold = 0.5);

/// Average ranks (1-based, ties share the mean rank).
std::vector<double> average_ranks(const std::vector<double>& v);

/// Pearson correlation of average ranks. Throws DomainError for constant input or n < 3.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

struct Coefficient {
  std::string name;
  double mean;
  double sd;
  double lower;  // 95% credible interval
  double upper;
  bool excludes_zero() const { return lower > 0.0 || upper < 0.0; }
};

struct RegressionResult {
  std::vector<Coefficient> coefficients;  // intercept first
  double sigma2_mean = 0.0;
  double sigma2_sd = 0.0;
  double dic = 0.0;
  double p_d = 0.0;
  double d_bar = 0.0;
  std::size_t n = 0;
  std::size_t draws_used = 1;  // per-draw pooling: draws with a full-rank design
};

/// Bayesian linear regression under the flat prior p(b, s2) ~ 1/s2, with an
/// intercept prepended. Throws RankDeficiencyError naming collinear columns.
/// An exact fit (zero residual) gives point intervals and DIC = -inf.
RegressionResult bayes_linreg_dic(const std::vector<double>& target,
                                  const std::vector<std::vector<double>>& features,
                                  const std::vector<std::string>& names);

/// Feature families per series: (i) x (1 + xi_s), (ii) x xi_s, (iii) x,
/// (iv) x and x xi_s as two columns.
enum class FeatureSpec { amplified_local, amplification, local, local_and_amplification };
inline constexpr FeatureSpec kFeatureSpecs[] = {FeatureSpec::amplified_local, FeatureSpec::amplification,
                                                FeatureSpec::local, FeatureSpec::local_and_amplification};
std::string to_string(FeatureSpec spec);

/// Per-series latent summaries a regression feature is built from.
struct SeriesFeatures {
  std::vector<double> local;
  std::vector<double> amplification;
  std::vector<double> amplified_local;  // local + amplification
};

std::vector<SeriesFeatures> features_from_summary(const mcmc::PosteriorSummary& means);
std::vector<SeriesFeatures> features_from_draw(const CountPanel& panel, const StaticParams& theta,
                                               const LatentPaths& paths);

struct RegressionTable {
  FeatureSpec spec;
  std::vector<std::size_t> subset;  // 0-based series included
  std::string label;                // "a", "b", ... then the full set
  RegressionResult result;
};

/// Subsets: each single series, then all series together. Target and features
/// are first-differenced over `days` (indices into the fitted day axis).
std::vector<RegressionTable> regression_grid(const std::vector<double>& target,
                                             const std::vector<std::size_t>& days,
                                             const std::vector<SeriesFeatures>& features);

/// Same grid refit on each draw's features; coefficient means and SDs pool
/// across draws by the law of total variance and DIC is averaged. Draws whose
/// design is rank deficient for a cell are skipped for that cell.
std::vector<RegressionTable> regression_grid_per_draw(const std::vector<double>& target,
                                                      const std::vector<std::size_t>& days,
                                                      const std::vector<std::vector<SeriesFeatures>>& draws);

struct ScalarSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

/// Linear-interpolation quantile of unsorted data.
double quantile(std::vector<double> v, double p);
ScalarSummary summarize(const std::vector<double>& v);

/// Named scalar traces of every static parameter: alpha_w, beta_w, delta_w,
/// persistence_w, phi_z_k, then per series j (1-based) alpha_j, beta_j,
/// delta_j, persistence_j, xi_j_l for l >= 2, eta_j, gamma_j, lambda_j_lk, phi_j_k.
std::vector<std::pair<std::string, std::vector<double>>> parameter_traces(
    const std::vector<mcmc::DrawRecord>& draws);

}  // namespace argpois::analysis
