#include "argpois/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "argpois/errors.hpp"

namespace argpois::pf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t block_count(std::size_t n) { return (n + kernels::kBlock - 1) / kernels::kBlock; }

void mutate_block(const ArgParams& arg, const AffinePoissonObs& obs, std::size_t t,
                  std::uint64_t seed, std::span<const double> parents,
                  std::span<const std::size_t> ancestors, bool prior_only,
                  std::span<double> children, std::span<double> log_weights, std::size_t block) {
  Rng rng = make_stream(seed, {t, block});
  const std::size_t begin = block * kernels::kBlock;
  const std::size_t end = std::min(begin + kernels::kBlock, children.size());
  for (std::size_t i = begin; i < end; ++i) {
    const double x = dist::ncga_sample(rng, arg.transition(parents[ancestors[i]]));
    children[i] = x;
    log_weights[i] = prior_only ? 0.0 : obs.log_weight(t - 1, x);
  }
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> normalize(std::span<const double> log_weights) {
  const double lse = log_sum_exp(log_weights);
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - lse);
  return w;
}

std::size_t categorical(Rng& rng, std::span<const double> weights) {
  const double u = uniform_open(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // rounding left u above the final partial sum; take the last positive weight
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

std::vector<double> weighted_quantiles(std::span<const double> values, std::span<const double> w,
                                       const std::vector<double>& levels) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> out(levels.size());
  std::vector<std::size_t> level_order(levels.size());
  std::iota(level_order.begin(), level_order.end(), 0);
  std::sort(level_order.begin(), level_order.end(), [&](auto a, auto b) { return levels[a] < levels[b]; });
  double acc = 0.0;
  std::size_t q = 0;
  for (std::size_t i = 0; i < order.size() && q < level_order.size(); ++i) {
    acc += w[order[i]];
    while (q < level_order.size() && acc >= levels[level_order[q]]) {
      out[level_order[q]] = values[order[i]];
      ++q;
    }
  }
  for (; q < level_order.size(); ++q) out[level_order[q]] = values[order.back()];
  return out;
}

struct Attempt {
  FilterOutput out;
  bool collapsed = false;
  std::size_t collapse_day = 0;
};

Attempt run_once(const ArgParams& arg, const AffinePoissonObs& obs, Rng& rng,
                 const FilterConfig& cfg, std::size_t n) {
  const std::size_t T = obs.days;
  const std::uint64_t seed = rng();
  Attempt a;
  auto& out = a.out;
  out.particles = n;
  out.filtered_mean.resize(T);
  out.filtered_sd.resize(T);
  out.ess.resize(T);
  if (!cfg.quantiles.empty()) out.filtered_quantiles.resize(T);

  // values[t * n + i]: particle i on day t (t = 0 is the initial day)
  std::vector<double> values((T + 1) * n);
  std::vector<std::size_t> ancestry(T * n);
  std::vector<double> log_w(n, 0.0);

  const auto init = initial_law(arg);
  for (std::size_t b = 0; b < block_count(n); ++b) {
    Rng brng = make_stream(seed, {0, b});
    const std::size_t end = std::min((b + 1) * kernels::kBlock, n);
    for (std::size_t i = b * kernels::kBlock; i < end; ++i) {
      values[i] = std::max(dist::gamma_sample(brng, init.shape, init.scale),
                           std::numeric_limits<double>::min());
    }
  }

  std::vector<double> weights(n, 1.0 / static_cast<double>(n));
  for (std::size_t t = 1; t <= T; ++t) {
    std::span<std::size_t> anc(ancestry.data() + (t - 1) * n, n);
    if (t == 1) {
      std::iota(anc.begin(), anc.end(), 0);
    } else {
      const auto picked = resample_systematic(rng, weights, n);
      std::copy(picked.begin(), picked.end(), anc.begin());
    }
    std::span<const double> parents(values.data() + (t - 1) * n, n);
    std::span<double> children(values.data() + t * n, n);
    if (cfg.backend == Backend::openmp) {
      kernels::mutate_and_weight_openmp(arg, obs, t, seed, parents, anc, cfg.prior_only, children, log_w);
    } else {
      kernels::mutate_and_weight_serial(arg, obs, t, seed, parents, anc, cfg.prior_only, children, log_w);
    }

    const double lse = log_sum_exp(log_w);
    if (!std::isfinite(lse)) {
      a.collapsed = true;
      a.collapse_day = t;
      return a;
    }
    out.loglik += lse - std::log(static_cast<double>(n)) - (cfg.prior_only ? 0.0 : obs.log_factorials[t - 1]);
    double mean = 0.0;
    double sq = 0.0;
    double ess_den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] = std::exp(log_w[i] - lse);
      mean += weights[i] * children[i];
      ess_den += weights[i] * weights[i];
    }
    for (std::size_t i = 0; i < n; ++i) sq += weights[i] * (children[i] - mean) * (children[i] - mean);
    out.filtered_mean[t - 1] = mean;
    out.filtered_sd[t - 1] = std::sqrt(sq);
    out.ess[t - 1] = 1.0 / ess_den;
    if (!cfg.quantiles.empty()) {
      out.filtered_quantiles[t - 1] = weighted_quantiles(children, weights, cfg.quantiles);
    }
  }

  // one lineage, chosen from the final weights, traced back through the ancestry
  std::size_t k = categorical(rng, weights);
  out.path.resize(T);
  for (std::size_t t = T; t >= 1; --t) {
    out.path[t - 1] = values[t * n + k];
    k = ancestry[(t - 1) * n + k];
  }
  out.initial = values[k];
  out.final_cloud.values.assign(values.begin() + static_cast<std::ptrdiff_t>(T * n), values.end());
  out.final_cloud.log_weights = log_w;
  return a;
}

}  // namespace

AffinePoissonObs::AffinePoissonObs(std::size_t days_, std::size_t terms_)
    : days(days_),
      terms(terms_),
      counts(days_ * terms_, 0),
      offset(days_ * terms_, 0.0),
      slope(days_ * terms_, 0.0),
      log_factorials(days_, 0.0) {}

void AffinePoissonObs::set(std::size_t t, std::size_t k, std::int64_t count, double off, double sl) {
  const std::size_t idx = t * terms + k;
  log_factorials[t] += dist::log_gamma(static_cast<double>(count) + 1.0) -
                       dist::log_gamma(static_cast<double>(counts[idx]) + 1.0);
  counts[idx] = count;
  offset[idx] = off;
  slope[idx] = sl;
}

double AffinePoissonObs::log_weight(std::size_t t, double latent) const {
  double lw = 0.0;
  const std::size_t base = t * terms;
  for (std::size_t k = 0; k < terms; ++k) {
    const double lambda = offset[base + k] + slope[base + k] * latent;
    const auto c = counts[base + k];
    if (lambda <= 0.0) {
      if (c > 0) return kNegInf;
      continue;
    }
    lw += static_cast<double>(c) * std::log(lambda) - lambda;
  }
  return lw;
}

AffinePoissonObs global_observations(const CountPanel& panel, const StaticParams& theta,
                                     const LatentPaths& paths) {
  const std::size_t T = panel.days();
  const std::size_t J = panel.series();
  AffinePoissonObs obs(T, J + 1);
  const auto ez = covariate_terms(panel.global_covariates, theta.global.phi);
  for (std::size_t t = 0; t < T; ++t) obs.set(t, 0, panel.z[t], ez[t], 1.0);
  for (std::size_t j = 0; j < J; ++j) {
    const auto& sp = theta.series[j];
    const auto ej = covariate_terms(panel.covariates[j], sp.phi);
    for (std::size_t t = 0; t < T; ++t) {
      const double amp = 1.0 + sp.xi[static_cast<std::size_t>(paths.s[j][t])];
      obs.set(t, j + 1, panel.y[j][t], paths.x[j][t] * amp + ej[t], 1.0);
    }
  }
  return obs;
}

AffinePoissonObs local_observations(std::size_t j, const CountPanel& panel,
                                    const StaticParams& theta, const LatentPaths& paths) {
  const std::size_t T = panel.days();
  AffinePoissonObs obs(T, 1);
  const auto& sp = theta.series.at(j);
  const auto ej = covariate_terms(panel.covariates[j], sp.phi);
  for (std::size_t t = 0; t < T; ++t) {
    const double amp = 1.0 + sp.xi[static_cast<std::size_t>(paths.s[j][t])];
    obs.set(t, 0, panel.y[j][t], paths.w[t] + ej[t], amp);
  }
  return obs;
}

std::vector<double> ParticleCloud::normalized_weights() const { return normalize(log_weights); }

double ParticleCloud::ess() const {
  const auto w = normalized_weights();
  double s = 0.0;
  for (double v : w) s += v * v;
  return 1.0 / s;
}

std::vector<std::size_t> resample_systematic(Rng& rng, std::span<const double> weights,
                                             std::size_t n) {
  if (weights.empty() || n == 0) throw DomainError("resample_systematic: empty input");
  double total = 0.0;
  for (double w : weights) {
    if (std::isnan(w) || w < 0.0) throw DomainError("resample_systematic: NaN or negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-8) throw DomainError("resample_systematic: weights must sum to 1");

  std::vector<std::size_t> out(n);
  const double step = 1.0 / static_cast<double>(n);
  double u = uniform_open(rng) * step;
  double acc = weights[0];
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    while (u >= acc && i + 1 < weights.size()) acc += weights[++i];
    out[k] = i;
    u += step;
  }
  return out;
}

FilterOutput sm_filter(const ArgParams& arg, const AffinePoissonObs& obs, Rng& rng,
                       const FilterConfig& cfg) {
  if (cfg.particles < 2) throw DomainError("particle filter needs at least 2 particles");
  arg.transition(1.0).validate();
  std::size_t n = cfg.particles;
  for (int attempt = 0;; ++attempt) {
    auto a = run_once(arg, obs, rng, cfg, n);
    if (!a.collapsed) return std::move(a.out);
    if (attempt >= cfg.max_retries) throw FilterDegeneracyError(a.collapse_day, n);
    n = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * cfg.growth));
  }
}

FilterOutput sm_filter_global(const CountPanel& panel, const StaticParams& theta,
                              const LatentPaths& paths, Rng& rng, const FilterConfig& cfg) {
  return sm_filter(theta.global.arg, global_observations(panel, theta, paths), rng, cfg);
}

FilterOutput sm_filter_local(std::size_t j, const CountPanel& panel, const StaticParams& theta,
                             const LatentPaths& paths, Rng& rng, const FilterConfig& cfg) {
  return sm_filter(theta.series.at(j).arg, local_observations(j, panel, theta, paths), rng, cfg);
}

namespace kernels {

void mutate_and_weight_serial(const ArgParams& arg, const AffinePoissonObs& obs, std::size_t t,
                              std::uint64_t seed, std::span<const double> parents,
                              std::span<const std::size_t> ancestors, bool prior_only,
                              std::span<double> children, std::span<double> log_weights) {
  const std::size_t blocks = block_count(children.size());
  for (std::size_t b = 0; b < blocks; ++b) {
    mutate_block(arg, obs, t, seed, parents, ancestors, prior_only, children, log_weights, b);
  }
}

void mutate_and_weight_openmp(const ArgParams& arg, const AffinePoissonObs& obs, std::size_t t,
                              std::uint64_t seed, std::span<const double> parents,
                              std::span<const std::size_t> ancestors, bool prior_only,
                              std::span<double> children, std::span<double> log_weights) {
  const auto blocks = static_cast<std::ptrdiff_t>(block_count(children.size()));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    mutate_block(arg, obs, t, seed, parents, ancestors, prior_only, children, log_weights,
                 static_cast<std::size_t>(b));
  }
}

}  // namespace kernels

}  // namespace argpois::pf
