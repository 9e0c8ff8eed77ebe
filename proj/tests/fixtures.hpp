#pragma once

// Small hand-built model instances used across test binaries.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "argpois/model.hpp"

namespace testing {

inline argpois::SeriesParams two_regime_series(double alpha, double beta, double delta, double xi2,
                                               double stay1 = 0.9, double stay2 = 0.7) {
  argpois::SeriesParams sp;
  sp.arg = {alpha, beta, delta};
  sp.xi = {0.0, xi2};
  sp.phi = Eigen::VectorXd(0);
  sp.transition.resize(2, 2);
  sp.transition << stay1, 1.0 - stay1, 1.0 - stay2, stay2;
  return sp;
}

/// J series with no covariates, every count set to `count`.
inline argpois::CountPanel flat_panel(std::size_t J, std::size_t T, std::int64_t count) {
  argpois::CountPanel panel;
  panel.y.assign(J, std::vector<std::int64_t>(T, count));
  panel.z.assign(T, count);
  panel.fill_empty_covariates();
  return panel;
}

inline argpois::LatentPaths flat_paths(std::size_t J, std::size_t T, double w, double x, int s = 0) {
  argpois::LatentPaths p;
  p.w_initial = w;
  p.w.assign(T, w);
  p.x_initial.assign(J, x);
  p.x.assign(J, std::vector<double>(T, x));
  p.s_initial.assign(J, s);
  p.s.assign(J, std::vector<int>(T, s));
  return p;
}

inline argpois::StaticParams two_regime_theta(std::size_t J) {
  argpois::StaticParams theta;
  theta.global.arg = {2.0, 0.8, 0.5};
  theta.global.phi = Eigen::VectorXd(0);
  for (std::size_t j = 0; j < J; ++j) theta.series.push_back(two_regime_series(3.0, 1.0, 0.5, 1.5));
  return theta;
}

}  // namespace testing
