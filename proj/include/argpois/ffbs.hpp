#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "argpois/model.hpp"
#include "argpois/rng.hpp"

/// Forward-filtering backward-sampling for a discrete hidden Markov chain.
namespace argpois::ffbs {

struct ChainPosterior {
  Eigen::MatrixXd filtered;   // T x L, rows on the simplex
  int initial = 0;            // sampled s_0
  std::vector<int> path;      // sampled s_1..s_T (0-based labels)
  double log_normalizer = 0.0;
};

struct ForwardPass {
  Eigen::MatrixXd filtered;
  double log_normalizer = 0.0;
};

/// Entry (t, l): log Poisson(y_{j,t} | w_t + x_{j,t}(1 + xi_{j,l}) + exp(v_{j,t}' phi_j)).
Eigen::MatrixXd emission_logmatrix(std::size_t j, const CountPanel& panel, const StaticParams& theta,
                                   const LatentPaths& paths);

/// Forward filter with a per-row max shift. `init` is the law of s_0, which
/// carries no emission. Throws NumericalDegeneracyError on an all-zero row.
ForwardPass ffbs_forward(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transition,
                         const Eigen::VectorXd& init);

ChainPosterior ffbs_sample(Rng& rng, const Eigen::MatrixXd& emissions,
                           const Eigen::MatrixXd& transition, const Eigen::VectorXd& init);

}  // namespace argpois::ffbs
