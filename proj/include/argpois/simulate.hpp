#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "argpois/model.hpp"

namespace argpois::sim {

/// How a covariate block is generated.
///   none:     T x 0
///   constant: one column equal to `value`
///   sinusoid: two columns, an intercept of 1 and amplitude * sin(2 pi t / period + phase)
///   matrix:   `matrix` as given (must have T rows)
struct CovariateSpec {
  enum class Kind { none, constant, sinusoid, matrix };
  Kind kind = Kind::none;
  double value = 1.0;
  double amplitude = 1.0;
  double period = 7.0;
  double phase = 0.0;
  Eigen::MatrixXd matrix;

  std::size_t columns() const;
  Eigen::MatrixXd generate(std::size_t days) const;
};

CovariateSpec::Kind covariate_kind_from_string(const std::string& name);
std::string to_string(CovariateSpec::Kind kind);

struct SimSpec {
  std::size_t days = 334;
  StaticParams theta;                       // J = theta.series.size(), L = regimes()
  std::vector<CovariateSpec> covariates;    // J entries; empty means none everywhere
  CovariateSpec global_covariates;
  std::uint64_t seed = 1;
  bool allow_nonstationary = false;
  std::string start_date = "2020-01-01";

  std::size_t series() const { return theta.series.size(); }
  void validate() const;
};

struct SimResult {
  CountPanel panel;
  LatentPaths truth;
};

/// Forward simulation: regime chains start from the stationary law of their
/// transition matrix, latents from the ARG initial law, counts from Poisson
/// draws of the model intensities.
SimResult simulate_dataset(const SimSpec& spec);

/// J = 2, T = 334, L = 2 demonstration setting with strong amplification.
SimSpec default_spec(std::uint64_t seed = 1);

/// ISO-8601 dates start, start + 1 day, ...
std::vector<std::string> daily_dates(const std::string& start, std::size_t days);

}  // namespace argpois::sim
