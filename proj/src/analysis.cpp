#include "argpois/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include "argpois/errors.hpp"

namespace argpois::analysis {

namespace {

void resize_grid(std::vector<std::vector<double>>& m, std::size_t J, std::size_t T) {
  m.assign(J, std::vector<double>(T, 0.0));
}

Decomposition empty_decomposition(std::size_t J, std::size_t T) {
  Decomposition d;
  resize_grid(d.local, J, T);
  resize_grid(d.amplification, J, T);
  resize_grid(d.global, J, T);
  resize_grid(d.covariates, J, T);
  return d;
}

std::string series_suffix(std::size_t j) { return "_" + std::to_string(j + 1); }

}  // namespace

// ---- decomposition -------------------------------------------------------

ComponentValues component_shares(const ComponentValues& v) {
  const double total = v.local + v.amplification + v.global + v.covariates;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DomainError("intensity decomposition: total intensity must be positive and finite");
  }
  return {v.local / total, v.amplification / total, v.global / total, v.covariates / total};
}

Decomposition decompose_draw(const CountPanel& panel, const StaticParams& theta, const LatentPaths& paths) {
  const std::size_t J = panel.series();
  const std::size_t T = panel.days();
  auto d = empty_decomposition(J, T);
  for (std::size_t j = 0; j < J; ++j) {
    const auto& sp = theta.series[j];
    const auto ej = covariate_terms(panel.covariates[j], sp.phi);
    for (std::size_t t = 0; t < T; ++t) {
      const double x = paths.x[j][t];
      const auto s = component_shares(
          {x, x * sp.xi[static_cast<std::size_t>(paths.s[j][t])], paths.w[t], ej[t]});
      d.local[j][t] = s.local;
      d.amplification[j][t] = s.amplification;
      d.global[j][t] = s.global;
      d.covariates[j][t] = s.covariates;
    }
  }
  return d;
}

Decomposition decompose(const std::vector<mcmc::DrawRecord>& draws, const CountPanel& panel) {
  const std::size_t J = panel.series();
  const std::size_t T = panel.days();
  auto acc = empty_decomposition(J, T);
  std::size_t n = 0;
  for (const auto& r : draws) {
    if (!r.paths) continue;
    const auto d = decompose_draw(panel, r.theta, *r.paths);
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t t = 0; t < T; ++t) {
        acc.local[j][t] += d.local[j][t];
        acc.amplification[j][t] += d.amplification[j][t];
        acc.global[j][t] += d.global[j][t];
        acc.covariates[j][t] += d.covariates[j][t];
      }
    }
    ++n;
  }
  if (n == 0) throw DomainError("decompose: no stored draw carries latent paths");
  for (auto* m : {&acc.local, &acc.amplification, &acc.global, &acc.covariates}) {
    for (auto& row : *m) {
      for (double& v : row) v /= static_cast<double>(n);
    }
  }
  return acc;
}

// ---- regimes -------------------------------------------------------------

RegimeReport regime_report(const std::vector<double>& amplified_prob, double threshold) {
  RegimeReport r;
  r.prob = amplified_prob;
  r.flagged.resize(amplified_prob.size());
  for (std::size_t t = 0; t < amplified_prob.size(); ++t) r.flagged[t] = amplified_prob[t] > threshold;
  for (std::size_t t = 0; t < r.flagged.size();) {
    if (!r.flagged[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end + 1 < r.flagged.size() && r.flagged[end + 1]) ++end;
    r.episodes.push_back({t, end});
    r.durations.push_back(end - t + 1);
    t = end + 1;
  }
  return r;
}

std::vector<RegimeReport> regime_report(const mcmc::PosteriorSummary& means, double threshold) {
  std::vector<RegimeReport> out;
  for (const auto& probs : means.regime_prob) {
    std::vector<double> amplified(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index t = 0; t < probs.rows(); ++t) {
      amplified[static_cast<std::size_t>(t)] = std::clamp(1.0 - probs(t, 0), 0.0, 1.0);
    }
    out.push_back(regime_report(amplified, threshold));
  }
  return out;
}

// ---- rank correlation ----------------------------------------------------

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t k = i;
    while (k + 1 < order.size() && v[order[k + 1]] == v[order[i]]) ++k;
    const double r = 0.5 * static_cast<double>(i + k) + 1.0;
    for (std::size_t m = i; m <= k; ++m) ranks[order[m]] = r;
    i = k + 1;
  }
  return ranks;
}

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DomainError("spearman_rho: inputs differ in length");
  if (a.size() < 3) throw DomainError("spearman_rho: at least 3 observations required");
  for (double v : a) {
    if (std::isnan(v)) throw DomainError("spearman_rho: NaN input");
  }
  for (double v : b) {
    if (std::isnan(v)) throw DomainError("spearman_rho: NaN input");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DomainError("spearman_rho: correlation undefined for constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// ---- regression ----------------------------------------------------------

RegressionResult bayes_linreg_dic(const std::vector<double>& target,
                                  const std::vector<std::vector<double>>& features,
                                  const std::vector<std::string>& names) {
  const std::size_t n = target.size();
  const std::size_t k = features.size() + 1;
  if (names.size() != features.size()) throw DomainError("bayes_linreg_dic: one name per feature required");
  if (n < k + 3) {
    throw DomainError("bayes_linreg_dic: need at least " + std::to_string(k + 3) + " observations, got " +
                      std::to_string(n));
  }
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd x(N, K);
  Eigen::VectorXd y(N);
  x.col(0).setOnes();
  for (std::size_t c = 0; c < features.size(); ++c) {
    if (features[c].size() != n) throw DomainError("bayes_linreg_dic: feature '" + names[c] + "' has wrong length");
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) = features[c][i];
  }
  for (std::size_t i = 0; i < n; ++i) y[static_cast<Eigen::Index>(i)] = target[i];

  std::vector<std::string> all_names{"intercept"};
  all_names.insert(all_names.end(), names.begin(), names.end());

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < K) {
    std::string cols;
    for (Eigen::Index i = qr.rank(); i < K; ++i) {
      if (!cols.empty()) cols += ", ";
      cols += all_names[static_cast<std::size_t>(qr.colsPermutation().indices()[i])];
    }
    throw RankDeficiencyError("design matrix has rank " + std::to_string(qr.rank()) + " < " + std::to_string(K) +
                              "; collinear column(s): " + cols);
  }
  const Eigen::VectorXd beta = qr.solve(y);
  const double rss = (y - x * beta).squaredNorm();
  if (rss == 0.0) {
    // exact fit: sigma^2 collapses to 0 and the deviance to -inf
    RegressionResult r;
    r.n = n;
    for (Eigen::Index i = 0; i < K; ++i) {
      r.coefficients.push_back({all_names[static_cast<std::size_t>(i)], beta[i], 0.0, beta[i], beta[i]});
    }
    r.d_bar = -std::numeric_limits<double>::infinity();
    r.dic = r.d_bar;
    return r;
  }
  const double nu = static_cast<double>(n - k);
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(K, K));
  const double s2 = rss / nu;

  RegressionResult r;
  r.n = n;
  const boost::math::students_t_distribution<double> tdist(nu);
  const double tq = boost::math::quantile(tdist, 0.975);
  for (Eigen::Index i = 0; i < K; ++i) {
    const double scale = std::sqrt(s2 * xtx_inv(i, i));
    Coefficient c;
    c.name = all_names[static_cast<std::size_t>(i)];
    c.mean = beta[i];
    c.sd = scale * std::sqrt(nu / (nu - 2.0));
    c.lower = beta[i] - tq * scale;
    c.upper = beta[i] + tq * scale;
    r.coefficients.push_back(c);
  }
  // sigma^2 | y ~ InvGamma(nu / 2, rss / 2)
  r.sigma2_mean = rss / (nu - 2.0);
  r.sigma2_sd = nu > 4.0 ? r.sigma2_mean * std::sqrt(2.0 / (nu - 4.0)) : std::numeric_limits<double>::infinity();

  // D = n log(2 pi s2) + RSS(b) / s2; its posterior mean is closed form
  const double dn = static_cast<double>(n);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  r.d_bar = dn * log2pi + dn * (std::log(rss / 2.0) - boost::math::digamma(nu / 2.0)) + dn;
  const double d_hat = dn * (log2pi + std::log(r.sigma2_mean)) + rss / r.sigma2_mean;
  r.p_d = r.d_bar - d_hat;
  r.dic = r.d_bar + r.p_d;
  return r;
}

std::string to_string(FeatureSpec spec) {
  switch (spec) {
    case FeatureSpec::amplified_local: return "amplified_local";
    case FeatureSpec::amplification: return "amplification";
    case FeatureSpec::local: return "local";
    case FeatureSpec::local_and_amplification: return "local_and_amplification";
  }
  return "unknown";
}

std::vector<SeriesFeatures> features_from_summary(const mcmc::PosteriorSummary& means) {
  std::vector<SeriesFeatures> out(means.x.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j].local = means.x[j];
    out[j].amplification = means.amplification[j];
    out[j].amplified_local.resize(means.x[j].size());
    for (std::size_t t = 0; t < means.x[j].size(); ++t) {
      out[j].amplified_local[t] = means.x[j][t] + means.amplification[j][t];
    }
  }
  return out;
}

std::vector<SeriesFeatures> features_from_draw(const CountPanel& panel, const StaticParams& theta,
                                               const LatentPaths& paths) {
  std::vector<SeriesFeatures> out(panel.series());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto& sp = theta.series[j];
    out[j].local = paths.x[j];
    out[j].amplification.resize(panel.days());
    out[j].amplified_local.resize(panel.days());
    for (std::size_t t = 0; t < panel.days(); ++t) {
      const double a = paths.x[j][t] * sp.xi[static_cast<std::size_t>(paths.s[j][t])];
      out[j].amplification[t] = a;
      out[j].amplified_local[t] = paths.x[j][t] + a;
    }
  }
  return out;
}

namespace {

std::vector<double> differences(const std::vector<double>& v, const std::vector<std::size_t>& days) {
  std::vector<double> d(days.size() - 1);
  for (std::size_t i = 1; i < days.size(); ++i) d[i - 1] = v.at(days[i]) - v.at(days[i - 1]);
  return d;
}

RegressionResult fit_cell(const std::vector<double>& dtarget, const std::vector<std::size_t>& days,
                          const std::vector<SeriesFeatures>& features, FeatureSpec spec,
                          const std::vector<std::size_t>& subset) {
  std::vector<std::vector<double>> cols;
  std::vector<std::string> names;
  for (std::size_t j : subset) {
    const auto& f = features.at(j);
    switch (spec) {
      case FeatureSpec::amplified_local:
        cols.push_back(differences(f.amplified_local, days));
        names.push_back("d_amplified_local" + series_suffix(j));
        break;
      case FeatureSpec::amplification:
        cols.push_back(differences(f.amplification, days));
        names.push_back("d_amplification" + series_suffix(j));
        break;
      case FeatureSpec::local:
        cols.push_back(differences(f.local, days));
        names.push_back("d_local" + series_suffix(j));
        break;
      case FeatureSpec::local_and_amplification:
        cols.push_back(differences(f.local, days));
        names.push_back("d_local" + series_suffix(j));
        cols.push_back(differences(f.amplification, days));
        names.push_back("d_amplification" + series_suffix(j));
        break;
    }
  }
  return bayes_linreg_dic(dtarget, cols, names);
}

struct GridCell {
  FeatureSpec spec;
  std::vector<std::size_t> subset;
  std::string label;
};

std::vector<GridCell> grid_cells(std::size_t J) {
  std::vector<std::vector<std::size_t>> subsets;
  for (std::size_t j = 0; j < J; ++j) subsets.push_back({j});
  if (J > 1) {
    std::vector<std::size_t> all(J);
    std::iota(all.begin(), all.end(), 0);
    subsets.push_back(all);
  }
  std::vector<GridCell> cells;
  for (auto spec : kFeatureSpecs) {
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      cells.push_back({spec, subsets[i], std::string(1, static_cast<char>('a' + i))});
    }
  }
  return cells;
}

void check_alignment(const std::vector<double>& target, const std::vector<std::size_t>& days) {
  if (target.size() != days.size()) throw DomainError("regression: target and day index differ in length");
  if (days.size() < 2) throw DomainError("regression: at least two aligned days required");
}

}  // namespace

std::vector<RegressionTable> regression_grid(const std::vector<double>& target,
                                             const std::vector<std::size_t>& days,
                                             const std::vector<SeriesFeatures>& features) {
  check_alignment(target, days);
  std::vector<std::size_t> positions(target.size());
  std::iota(positions.begin(), positions.end(), 0);
  const auto dtarget = differences(target, positions);
  std::vector<RegressionTable> out;
  for (auto& cell : grid_cells(features.size())) {
    out.push_back({cell.spec, cell.subset, cell.label, fit_cell(dtarget, days, features, cell.spec, cell.subset)});
  }
  return out;
}

std::vector<RegressionTable> regression_grid_per_draw(const std::vector<double>& target,
                                                      const std::vector<std::size_t>& days,
                                                      const std::vector<std::vector<SeriesFeatures>>& draws) {
  if (draws.empty()) throw DomainError("regression: no draws supplied");
  check_alignment(target, days);
  std::vector<std::size_t> positions(target.size());
  std::iota(positions.begin(), positions.end(), 0);
  const auto dtarget = differences(target, positions);
  const double z = 1.959963984540054;
  std::vector<RegressionTable> out;
  for (auto& cell : grid_cells(draws.front().size())) {
    // a draw whose features are collinear for this cell (e.g. no amplified
    // day in a series) has no posterior of its own and is left out
    std::vector<RegressionResult> per;
    std::string last_error;
    for (const auto& f : draws) {
      try {
        per.push_back(fit_cell(dtarget, days, f, cell.spec, cell.subset));
      } catch (const RankDeficiencyError& e) {
        last_error = e.what();
      }
    }
    if (per.empty()) {
      throw RankDeficiencyError("specification " + to_string(cell.spec) + ", model " + cell.label +
                                ": every draw is rank deficient (" + last_error + ")");
    }
    RegressionResult res = per.front();
    res.draws_used = per.size();
    const double m = static_cast<double>(per.size());
    double dic = 0.0, pd = 0.0, dbar = 0.0, s2m = 0.0, s2v = 0.0;
    for (const auto& p : per) {
      dic += p.dic;
      pd += p.p_d;
      dbar += p.d_bar;
      s2m += p.sigma2_mean;
    }
    s2m /= m;
    for (const auto& p : per) s2v += p.sigma2_sd * p.sigma2_sd + std::pow(p.sigma2_mean - s2m, 2);
    res.dic = dic / m;
    res.p_d = pd / m;
    res.d_bar = dbar / m;
    res.sigma2_mean = s2m;
    res.sigma2_sd = std::sqrt(s2v / m);
    for (std::size_t i = 0; i < res.coefficients.size(); ++i) {
      double mean = 0.0;
      for (const auto& p : per) mean += p.coefficients[i].mean;
      mean /= m;
      double var = 0.0;
      for (const auto& p : per) {
        const auto& ci = p.coefficients[i];
        var += ci.sd * ci.sd + (ci.mean - mean) * (ci.mean - mean);
      }
      auto& co = res.coefficients[i];
      co.mean = mean;
      co.sd = std::sqrt(var / m);
      // normal approximation to the pooled mixture
      co.lower = mean - z * co.sd;
      co.upper = mean + z * co.sd;
    }
    out.push_back({cell.spec, cell.subset, cell.label, res});
  }
  return out;
}

// ---- parameter summaries -------------------------------------------------

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw DomainError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

ScalarSummary summarize(const std::vector<double>& v) {
  if (v.empty()) throw DomainError("summary of an empty sample");
  ScalarSummary s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.q05 = quantile(v, 0.05);
  s.q50 = quantile(v, 0.50);
  s.q95 = quantile(v, 0.95);
  return s;
}

std::vector<std::pair<std::string, std::vector<double>>> parameter_traces(
    const std::vector<mcmc::DrawRecord>& draws) {
  std::vector<std::pair<std::string, std::vector<double>>> traces;
  if (draws.empty()) return traces;
  std::size_t slot = 0;
  auto push = [&](const std::string& name, double v) {
    if (slot == traces.size()) traces.emplace_back(name, std::vector<double>{});
    traces[slot++].second.push_back(v);
  };
  for (const auto& r : draws) {
    slot = 0;
    const auto& g = r.theta.global;
    push("alpha_w", g.arg.alpha);
    push("beta_w", g.arg.beta);
    push("delta_w", g.arg.delta);
    push("persistence_w", g.arg.persistence());
    for (Eigen::Index k = 0; k < g.phi.size(); ++k) push("phi_z_" + std::to_string(k + 1), g.phi[k]);
    for (std::size_t j = 0; j < r.theta.series.size(); ++j) {
      const auto& sp = r.theta.series[j];
      const auto sfx = series_suffix(j);
      push("alpha" + sfx, sp.arg.alpha);
      push("beta" + sfx, sp.arg.beta);
      push("delta" + sfx, sp.arg.delta);
      push("persistence" + sfx, sp.arg.persistence());
      for (std::size_t l = 1; l < sp.xi.size(); ++l) push("xi" + sfx + "_" + std::to_string(l + 1), sp.xi[l]);
      push("eta" + sfx, sp.eta);
      push("gamma" + sfx, sp.gamma);
      for (Eigen::Index l = 0; l < sp.transition.rows(); ++l) {
        for (Eigen::Index k = 0; k < sp.transition.cols(); ++k) {
          push("lambda" + sfx + "_" + std::to_string(l + 1) + std::to_string(k + 1), sp.transition(l, k));
        }
      }
      for (Eigen::Index k = 0; k < sp.phi.size(); ++k) push("phi" + sfx + "_" + std::to_string(k + 1), sp.phi[k]);
    }
  }
  return traces;
}

}  // namespace argpois::analysis
