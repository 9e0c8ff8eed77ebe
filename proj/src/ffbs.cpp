#include "argpois/ffbs.hpp"

#include <cmath>

#include "argpois/errors.hpp"

namespace argpois::ffbs {

namespace {

int draw_label(Rng& rng, const Eigen::VectorXd& probs) {
  const double total = probs.sum();
  const double u = uniform_open(rng) * total;
  double acc = 0.0;
  for (Eigen::Index l = 0; l < probs.size(); ++l) {
    acc += probs[l];
    if (u < acc) return static_cast<int>(l);
  }
  for (Eigen::Index l = probs.size(); l-- > 0;) {
    if (probs[l] > 0.0) return static_cast<int>(l);
  }
  return static_cast<int>(probs.size() - 1);
}

}  // namespace

Eigen::MatrixXd emission_logmatrix(std::size_t j, const CountPanel& panel, const StaticParams& theta,
                                   const LatentPaths& paths) {
  const std::size_t T = panel.days();
  const auto& sp = theta.series.at(j);
  const auto L = static_cast<Eigen::Index>(sp.xi.size());
  const auto ej = covariate_terms(panel.covariates.at(j), sp.phi);
  Eigen::MatrixXd e(static_cast<Eigen::Index>(T), L);
  for (std::size_t t = 0; t < T; ++t) {
    const double base = paths.w[t] + ej[t];
    for (Eigen::Index l = 0; l < L; ++l) {
      const double lambda = base + paths.x[j][t] * (1.0 + sp.xi[static_cast<std::size_t>(l)]);
      e(static_cast<Eigen::Index>(t), l) = dist::poisson_logpmf(panel.y[j][t], lambda);
    }
  }
  return e;
}

ForwardPass ffbs_forward(const Eigen::MatrixXd& emissions, const Eigen::MatrixXd& transition,
                         const Eigen::VectorXd& init) {
  const Eigen::Index T = emissions.rows();
  const Eigen::Index L = emissions.cols();
  if (transition.rows() != L || transition.cols() != L || init.size() != L) {
    throw DomainError("ffbs: emission, transition and init dimensions disagree");
  }
  ForwardPass fp;
  fp.filtered.resize(T, L);
  Eigen::RowVectorXd prev = init.transpose();
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::RowVectorXd predicted = prev * transition;
    const double shift = emissions.row(t).maxCoeff();
    if (!std::isfinite(shift)) throw NumericalDegeneracyError(static_cast<std::size_t>(t + 1));
    Eigen::RowVectorXd row(L);
    for (Eigen::Index l = 0; l < L; ++l) row[l] = predicted[l] * std::exp(emissions(t, l) - shift);
    const double mass = row.sum();
    if (!(mass > 0.0)) throw NumericalDegeneracyError(static_cast<std::size_t>(t + 1));
    fp.log_normalizer += std::log(mass) + shift;
    prev = row / mass;
    fp.filtered.row(t) = prev;
  }
  return fp;
}

ChainPosterior ffbs_sample(Rng& rng, const Eigen::MatrixXd& emissions,
                           const Eigen::MatrixXd& transition, const Eigen::VectorXd& init) {
  if (emissions.rows() == 0) throw DomainError("ffbs: empty emission matrix");
  auto fp = ffbs_forward(emissions, transition, init);
  const Eigen::Index T = emissions.rows();
  const Eigen::Index L = emissions.cols();
  ChainPosterior post;
  post.path.resize(static_cast<std::size_t>(T));
  int next = draw_label(rng, fp.filtered.row(T - 1).transpose());
  post.path[static_cast<std::size_t>(T - 1)] = next;
  Eigen::VectorXd probs(L);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index l = 0; l < L; ++l) probs[l] = fp.filtered(t, l) * transition(l, next);
    next = draw_label(rng, probs);
    post.path[static_cast<std::size_t>(t)] = next;
  }
  for (Eigen::Index l = 0; l < L; ++l) probs[l] = init[l] * transition(l, next);
  post.initial = draw_label(rng, probs);
  post.filtered = std::move(fp.filtered);
  post.log_normalizer = fp.log_normalizer;
  return post;
}

}  // namespace argpois::ffbs
