#include "argpois/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "argpois/errors.hpp"

namespace argpois {

namespace {

std::string describe_phi(const Eigen::VectorXd& phi) {
  std::ostringstream os;
  os << '[';
  for (Eigen::Index i = 0; i < phi.size(); ++i) os << (i ? ", " : "") << phi[i];
  os << ']';
  return os.str();
}

bool is_simplex_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    if (!(m(r, c) >= 0.0)) return false;
    total += m(r, c);
  }
  return std::abs(total - 1.0) < 1e-9;
}

template <class Where>
double observation_term(std::int64_t count, double lambda, std::string& diagnostic, Where where) {
  if (lambda <= 0.0) {
    if (count == 0) return 0.0;
    if (diagnostic.empty()) diagnostic = "zero intensity with positive count at " + where();
    return -std::numeric_limits<double>::infinity();
  }
  return dist::poisson_logpmf(count, lambda);
}

}  // namespace

void CountPanel::fill_empty_covariates() {
  const auto T = static_cast<Eigen::Index>(days());
  covariates.resize(series());
  for (auto& v : covariates) {
    if (v.size() == 0) v.resize(T, 0);
  }
  if (global_covariates.size() == 0) global_covariates.resize(T, 0);
  if (rescale.size() != series()) rescale.assign(series(), 1.0);
}

void CountPanel::validate() const {
  const std::size_t T = days();
  if (T < 2) throw ValidationError("panel needs at least 2 days");
  if (!dates.empty() && dates.size() != T) throw ValidationError("date column length mismatch");
  for (auto c : z) {
    if (c < 0) throw ValidationError("negative global count");
  }
  for (std::size_t j = 0; j < series(); ++j) {
    if (y[j].size() != T) throw ValidationError("series " + std::to_string(j + 1) + " length mismatch");
    for (auto c : y[j]) {
      if (c < 0) throw ValidationError("negative count in series " + std::to_string(j + 1));
    }
  }
  if (covariates.size() != series()) throw ValidationError("one covariate matrix per series required");
  for (std::size_t j = 0; j < series(); ++j) {
    const auto& v = covariates[j];
    if (static_cast<std::size_t>(v.rows()) != T) {
      throw ValidationError("covariates of series " + std::to_string(j + 1) + " have wrong row count");
    }
    if (!v.allFinite()) throw ValidationError("non-finite covariate in series " + std::to_string(j + 1));
  }
  if (static_cast<std::size_t>(global_covariates.rows()) != T) {
    throw ValidationError("global covariates have wrong row count");
  }
  if (!global_covariates.allFinite()) throw ValidationError("non-finite global covariate");
  for (double r : rescale) {
    if (!(r > 0.0)) throw ValidationError("rescale factors must be positive");
  }
  if (!(global_rescale > 0.0)) throw ValidationError("rescale factors must be positive");
}

void LatentPaths::validate(std::size_t regimes) const {
  const std::size_t T = w.size();
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(w_initial)) throw ValidationError("w_0 must be positive");
  for (double v : w) {
    if (!positive(v)) throw ValidationError("W must be strictly positive");
  }
  if (x.size() != x_initial.size() || s.size() != x.size() || s_initial.size() != x.size()) {
    throw ValidationError("latent path series count mismatch");
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j].size() != T || s[j].size() != T) throw ValidationError("latent path length mismatch");
    if (!positive(x_initial[j])) throw ValidationError("x_0 must be positive");
    for (double v : x[j]) {
      if (!positive(v)) throw ValidationError("X must be strictly positive");
    }
    auto in_range = [&](int l) { return l >= 0 && static_cast<std::size_t>(l) < regimes; };
    if (!in_range(s_initial[j])) throw ValidationError("regime label out of range");
    for (int l : s[j]) {
      if (!in_range(l)) throw ValidationError("regime label out of range");
    }
  }
}

void StaticParams::validate(bool allow_zero_jump) const {
  auto check_arg = [](const ArgParams& a, const std::string& who) {
    if (!(a.alpha > 0.0) || !(a.beta > 0.0) || !(a.delta > 0.0) || !std::isfinite(a.alpha) ||
        !std::isfinite(a.beta) || !std::isfinite(a.delta)) {
      throw ValidationError(who + ": alpha, beta, delta must be positive");
    }
  };
  check_arg(global.arg, "global");
  const std::size_t L = regimes();
  if (L < 1) throw ValidationError("at least one regime required");
  for (std::size_t j = 0; j < series.size(); ++j) {
    const auto& sp = series[j];
    const std::string who = "series " + std::to_string(j + 1);
    check_arg(sp.arg, who);
    if (sp.xi.size() != L) throw ValidationError(who + ": xi must have L entries");
    if (sp.xi[0] != 0.0) throw ValidationError(who + ": xi_1 must be 0");
    for (std::size_t l = 1; l < L; ++l) {
      const bool ordered = allow_zero_jump ? sp.xi[l] >= sp.xi[l - 1] : sp.xi[l] > sp.xi[l - 1];
      if (!ordered) throw ValidationError(who + ": xi must be strictly increasing");
    }
    if (static_cast<std::size_t>(sp.transition.rows()) != L ||
        static_cast<std::size_t>(sp.transition.cols()) != L) {
      throw ValidationError(who + ": transition matrix must be L x L");
    }
    for (Eigen::Index r = 0; r < sp.transition.rows(); ++r) {
      if (!is_simplex_row(sp.transition, r)) throw ValidationError(who + ": transition rows must sum to 1");
    }
    if (!(sp.eta > 0.0) || !(sp.gamma > 0.0)) throw ValidationError(who + ": eta, gamma must be positive");
  }
}

double covariate_term(const Eigen::MatrixXd& v, const Eigen::VectorXd& phi, std::size_t t) {
  if (v.cols() == 0) return 0.0;
  const double eta = v.row(static_cast<Eigen::Index>(t)).dot(phi);
  const double e = std::exp(eta);
  if (!std::isfinite(e)) {
    std::ostringstream os;
    os << "exp(v'phi) overflows at t=" << t + 1 << " (linear predictor " << eta << ", phi "
       << describe_phi(phi) << ")";
    throw IntensityOverflowError(os.str());
  }
  return e;
}

std::vector<double> covariate_terms(const Eigen::MatrixXd& v, const Eigen::VectorXd& phi) {
  std::vector<double> out(static_cast<std::size_t>(v.rows()), 0.0);
  if (v.cols() == 0) return out;
  if (phi.size() != v.cols()) throw ValidationError("coefficient length does not match covariates");
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = covariate_term(v, phi, t);
  return out;
}

double intensity(std::size_t j, std::size_t t, const StaticParams& theta, const LatentPaths& paths,
                 const CountPanel& panel) {
  const auto& sp = theta.series.at(j);
  const double amp = 1.0 + sp.xi.at(static_cast<std::size_t>(paths.s.at(j).at(t)));
  return paths.w.at(t) + paths.x.at(j).at(t) * amp + covariate_term(panel.covariates.at(j), sp.phi, t);
}

double global_intensity(std::size_t t, const StaticParams& theta, const LatentPaths& paths,
                        const CountPanel& panel) {
  return paths.w.at(t) + covariate_term(panel.global_covariates, theta.global.phi, t);
}

Eigen::MatrixXi transition_counts(int s_initial, const std::vector<int>& s, std::size_t regimes) {
  const auto L = static_cast<Eigen::Index>(regimes);
  Eigen::MatrixXi n = Eigen::MatrixXi::Zero(L, L);
  auto check = [&](int l) {
    if (l < 0 || l >= L) throw ValidationError("regime label out of range");
  };
  check(s_initial);
  int prev = s_initial;
  for (int cur : s) {
    check(cur);
    ++n(prev, cur);
    prev = cur;
  }
  return n;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition) {
  const Eigen::Index L = transition.rows();
  if (L == 1) return Eigen::VectorXd::Ones(1);
  // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1
  Eigen::MatrixXd a = (transition - Eigen::MatrixXd::Identity(L, L)).transpose();
  a.row(L - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(L);
  rhs[L - 1] = 1.0;
  Eigen::VectorXd pi = a.colPivHouseholderQr().solve(rhs);
  for (Eigen::Index i = 0; i < L; ++i) pi[i] = std::max(pi[i], 0.0);
  return pi / pi.sum();
}

InitialLaw initial_law(const ArgParams& arg) {
  if (arg.stationary()) return {arg.alpha, arg.delta / (1.0 - arg.persistence())};
  return {arg.alpha, arg.delta};
}

double arg_transition_loglik(const ArgParams& arg, double initial, const std::vector<double>& path,
                             double tol) {
  double total = 0.0;
  double prev = initial;
  for (double cur : path) {
    total += dist::ncga_logpdf(cur, arg.transition(prev), tol);
    prev = cur;
  }
  return total;
}

double LoglikBreakdown::total() const {
  double t = global_transition + global_observation;
  for (const auto& s : series) t += s.total();
  return t;
}

LoglikBreakdown complete_data_loglik_parts(const CountPanel& panel, const LatentPaths& paths,
                                           const StaticParams& theta, double tol) {
  const std::size_t T = panel.days();
  const std::size_t J = panel.series();
  const std::size_t L = theta.regimes();
  LoglikBreakdown out;
  out.global_transition = arg_transition_loglik(theta.global.arg, paths.w_initial, paths.w, tol);
  const auto ez = covariate_terms(panel.global_covariates, theta.global.phi);
  for (std::size_t t = 0; t < T; ++t) {
    out.global_observation += observation_term(panel.z[t], paths.w[t] + ez[t], out.diagnostic,
                                               [t] { return "global t=" + std::to_string(t + 1); });
  }
  out.series.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto& sp = theta.series[j];
    auto& part = out.series[j];
    part.transition = arg_transition_loglik(sp.arg, paths.x_initial[j], paths.x[j], tol);
    const auto ej = covariate_terms(panel.covariates[j], sp.phi);
    for (std::size_t t = 0; t < T; ++t) {
      const double lambda =
          paths.w[t] + paths.x[j][t] * (1.0 + sp.xi[static_cast<std::size_t>(paths.s[j][t])]) + ej[t];
      part.observation += observation_term(panel.y[j][t], lambda, out.diagnostic,
                                           [j, t] {
                                             return "series " + std::to_string(j + 1) +
                                                    " t=" + std::to_string(t + 1);
                                           });
    }
    const auto counts = transition_counts(paths.s_initial[j], paths.s[j], L);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t k = 0; k < L; ++k) {
        const int n = counts(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
        if (n > 0) part.chain += n * std::log(sp.transition(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)));
      }
    }
    const auto init = stationary_distribution(sp.transition);
    part.chain += std::log(init[paths.s_initial[j]]);
  }
  return out;
}

double complete_data_loglik(const CountPanel& panel, const LatentPaths& paths,
                            const StaticParams& theta, double tol) {
  return complete_data_loglik_parts(panel, paths, theta, tol).total();
}

}  // namespace argpois
