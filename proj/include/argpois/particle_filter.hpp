#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "argpois/model.hpp"
#include "argpois/rng.hpp"

/// Selection/mutation (bootstrap) particle filter for one ARG(1) latent path
/// observed through Poisson counts whose intensities are affine in the latent.
namespace argpois::pf {

/// Which implementation runs the per-particle mutation/weighting loop. Both
/// consume identical per-block random streams and give bit-identical output.
enum class Backend { serial, openmp };

struct FilterConfig {
  std::size_t particles = 1000;
  /// On collapse, retry up to this many times, multiplying N by `growth` each time.
  int max_retries = 2;
  double growth = 2.0;
  /// Filtered quantile levels recorded per day; empty skips the sort.
  std::vector<double> quantiles;
  Backend backend = Backend::openmp;
  /// Propagate without observation weighting (prior predictive).
  bool prior_only = false;
};

/// count_{t,k} ~ Poisson(offset_{t,k} + slope_{t,k} * latent_t), k < terms, stored day-major.
struct AffinePoissonObs {
  std::size_t days = 0;
  std::size_t terms = 0;
  std::vector<std::int64_t> counts;
  std::vector<double> offset;
  std::vector<double> slope;
  std::vector<double> log_factorials;  // per day: sum_k log(count!)

  AffinePoissonObs(std::size_t days, std::size_t terms);
  void set(std::size_t t, std::size_t k, std::int64_t count, double offset, double slope);
  /// Log-likelihood of day t up to the log-factorial constant.
  double log_weight(std::size_t t, double latent) const;
};

/// The observation block for W: z plus every y_j, given X, S and coefficients.
AffinePoissonObs global_observations(const CountPanel& panel, const StaticParams& theta,
                                     const LatentPaths& paths);
/// The observation block for X_j: y_j given W, S_j and coefficients.
AffinePoissonObs local_observations(std::size_t j, const CountPanel& panel,
                                    const StaticParams& theta, const LatentPaths& paths);

struct ParticleCloud {
  std::vector<double> values;
  std::vector<double> log_weights;

  std::vector<double> normalized_weights() const;
  double ess() const;
};

struct FilterOutput {
  double initial = 0.0;                          // sampled day-0 value
  std::vector<double> path;                      // sampled days 1..T
  std::vector<double> filtered_mean;             // weighted, before selection
  std::vector<double> filtered_sd;
  std::vector<std::vector<double>> filtered_quantiles;  // T x quantiles.size()
  std::vector<double> ess;                       // before selection
  double loglik = 0.0;                           // log p(obs) estimate
  std::size_t particles = 0;                     // N actually used (after retries)
  ParticleCloud final_cloud;
};

/// Systematic resampling: returns n ancestor indices (0-based). Weights must
/// be nonnegative and sum to 1.
std::vector<std::size_t> resample_systematic(Rng& rng, std::span<const double> weights,
                                             std::size_t n);

/// Runs the SM filter and draws one path by tracing a single ancestral lineage
/// selected from the final weights. Throws FilterDegeneracyError once retries
/// are exhausted.
FilterOutput sm_filter(const ArgParams& arg, const AffinePoissonObs& obs, Rng& rng,
                       const FilterConfig& cfg);

FilterOutput sm_filter_global(const CountPanel& panel, const StaticParams& theta,
                              const LatentPaths& paths, Rng& rng, const FilterConfig& cfg);

FilterOutput sm_filter_local(std::size_t j, const CountPanel& panel, const StaticParams& theta,
                             const LatentPaths& paths, Rng& rng, const FilterConfig& cfg);

namespace kernels {

inline constexpr std::size_t kBlock = 256;

/// Mutates parents[ancestors[i]] through the ARG transition and writes the
/// day-t log weights. Particle block b draws from stream (seed, t, b).
void mutate_and_weight_serial(const ArgParams& arg, const AffinePoissonObs& obs, std::size_t t,
                              std::uint64_t seed, std::span<const double> parents,
                              std::span<const std::size_t> ancestors, bool prior_only,
                              std::span<double> children, std::span<double> log_weights);

void mutate_and_weight_openmp(const ArgParams& arg, const AffinePoissonObs& obs, std::size_t t,
                              std::uint64_t seed, std::span<const double> parents,
                              std::span<const std::size_t> ancestors, bool prior_only,
                              std::span<double> children, std::span<double> log_weights);

}  // namespace kernels

}  // namespace argpois::pf
