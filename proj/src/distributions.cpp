#include "argpois/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "argpois/errors.hpp"

namespace argpois::dist {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kSeriesCap = 2'000'000;

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

// Chernoff bounds on the Poisson(b) tails: log P(Z >= k) for k > b and
// log P(Z <= k) for k < b.
double log_upper_tail_bound(double b, double k) {
  return -b + k * (1.0 + std::log(b) - std::log(k));
}
double log_lower_tail_bound(double b, double k) {
  if (k <= 0.0) return -b;
  return -b + k * (1.0 + std::log(b) - std::log(k));
}

struct SeriesWindow {
  std::size_t lo = 0;
  std::size_t hi = 0;  // inclusive
};

SeriesWindow series_window(double b, double tol) {
  SeriesWindow w;
  const double sd = std::sqrt(b);
  w.hi = static_cast<std::size_t>(std::ceil(std::max(50.0, b + 10.0 * sd)));
  if (b > 200.0) w.lo = static_cast<std::size_t>(std::floor(b - 10.0 * sd));
  const double log_tol = std::log(tol);

  auto upper_tail = [&](std::size_t hi) {
    const double k = static_cast<double>(hi + 1);
    if (k > b) {
      const double lb = log_upper_tail_bound(b, k);
      if (lb < log_tol - 1.0) return std::exp(lb);
    }
    return boost::math::gamma_p(static_cast<double>(hi + 1), b);
  };
  auto lower_tail = [&](std::size_t lo) {
    if (lo == 0) return 0.0;
    const double k = static_cast<double>(lo - 1);
    const double lb = log_lower_tail_bound(b, k);
    if (lb < log_tol - 1.0) return std::exp(lb);
    return boost::math::gamma_q(k + 1.0, b);
  };

  while (upper_tail(w.hi) + lower_tail(w.lo) >= tol) {
    if (w.hi - w.lo + 1 >= kSeriesCap) {
      throw ConvergenceError("NcGa series did not reach tolerance " + std::to_string(tol),
                             kSeriesCap);
    }
    const std::size_t width = w.hi - w.lo + 1;
    w.hi += width;
    w.lo = w.lo > width ? w.lo - width : 0;
  }
  if (w.hi - w.lo + 1 > kSeriesCap) {
    throw ConvergenceError("NcGa series did not reach tolerance " + std::to_string(tol),
                           kSeriesCap);
  }
  return w;
}

}  // namespace

void NcGaParams::validate() const {
  if (!positive_finite(shape) || !positive_finite(scale) || !std::isfinite(noncentrality) ||
      noncentrality < 0.0) {
    throw DomainError("NcGa requires shape > 0, noncentrality >= 0, scale > 0 (got " +
                      std::to_string(shape) + ", " + std::to_string(noncentrality) + ", " +
                      std::to_string(scale) + ")");
  }
}

void TruncGammaParams::validate() const {
  if (!positive_finite(shape) || !positive_finite(scale) || !(upper > 0.0) || std::isnan(upper)) {
    throw DomainError("truncated Gamma requires shape > 0, scale > 0, upper > 0");
  }
}

double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

double gamma_logpdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return kNegInf;
  return (shape - 1.0) * std::log(x) - x / scale - shape * std::log(scale) - log_gamma(shape);
}

double poisson_logpmf(std::int64_t k, double lambda) {
  if (k < 0) throw DomainError("poisson_logpmf: negative count " + std::to_string(k));
  if (!positive_finite(lambda)) {
    throw DomainError("poisson_logpmf: intensity must be positive and finite");
  }
  const double kd = static_cast<double>(k);
  return kd * std::log(lambda) - lambda - log_gamma(kd + 1.0);
}

std::size_t ncga_series_terms(double noncentrality, double tol) {
  if (noncentrality == 0.0) return 1;
  const auto w = series_window(noncentrality, tol);
  return w.hi - w.lo + 1;
}

double ncga_logpdf(double x, const NcGaParams& p, double tol) {
  if (!positive_finite(x)) throw DomainError("ncga_logpdf: x must be positive and finite");
  p.validate();
  if (!(tol > 0.0 && tol <= 1e-6)) throw DomainError("ncga_logpdf: tol must lie in (0, 1e-6]");

  const double a = p.shape;
  const double b = p.noncentrality;
  const double c = p.scale;
  if (b == 0.0) return gamma_logpdf(x, a, c);

  const auto w = series_window(b, tol);
  const double lx = std::log(x);
  const double lc = std::log(c);
  const double lb = std::log(b);

  // term_k = log Gamma(x; a + k, c) + log Poisson(k; b), advanced by recurrence
  const double k0 = static_cast<double>(w.lo);
  double term = (a + k0 - 1.0) * lx - (a + k0) * lc - log_gamma(a + k0) - x / c + k0 * lb - b -
                log_gamma(k0 + 1.0);
  const double step = lx - lc + lb;

  double m = term;
  double s = 1.0;
  for (std::size_t k = w.lo; k < w.hi; ++k) {
    const double kd = static_cast<double>(k);
    term += step - std::log((a + kd) * (kd + 1.0));
    if (term > m) {
      s = s * std::exp(m - term) + 1.0;
      m = term;
    } else {
      s += std::exp(term - m);
    }
  }
  return m + std::log(s);
}

std::int64_t poisson_sample(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  boost::random::poisson_distribution<std::int64_t, double> d(mean);
  return d(rng);
}

double normal_sample(Rng& rng, double mean, double sd) {
  boost::random::normal_distribution<double> d(mean, sd);
  return d(rng);
}

// Marsaglia-Tsang squeeze on a ziggurat normal; measurably faster than
// std::gamma_distribution in the particle mutation loop.
double gamma_sample(Rng& rng, double shape, double scale) {
  if (shape < 1.0) {
    return gamma_sample(rng, shape + 1.0, scale) * std::pow(uniform_open(rng), 1.0 / shape);
  }
  boost::random::normal_distribution<double> normal;
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open(rng);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

double ncga_sample(Rng& rng, const NcGaParams& p) {
  p.validate();
  const auto z = poisson_sample(rng, p.noncentrality);
  const double x = gamma_sample(rng, p.shape + static_cast<double>(z), p.scale);
  // tiny shapes can underflow to 0; latents must stay strictly positive
  return std::max(x, std::numeric_limits<double>::min());
}

double trunc_gamma_cdf(double x, const TruncGammaParams& p) {
  p.validate();
  if (x <= 0.0) return 0.0;
  if (x >= p.upper) return 1.0;
  const double f_upper = std::isinf(p.upper) ? 1.0 : boost::math::gamma_p(p.shape, p.upper / p.scale);
  return boost::math::gamma_p(p.shape, x / p.scale) / f_upper;
}

double trunc_gamma_logpdf(double x, const TruncGammaParams& p) {
  p.validate();
  if (!(x > 0.0) || !(x < p.upper)) return kNegInf;
  if (std::isinf(p.upper)) return gamma_logpdf(x, p.shape, p.scale);
  const double f_upper = boost::math::gamma_p(p.shape, p.upper / p.scale);
  if (!(f_upper > std::numeric_limits<double>::min())) {
    throw DegenerateSupportError("truncated Gamma: CDF at the upper bound underflows");
  }
  return gamma_logpdf(x, p.shape, p.scale) - std::log(f_upper);
}

double trunc_gamma_sample(Rng& rng, const TruncGammaParams& p) {
  p.validate();
  const double f_upper = std::isinf(p.upper) ? 1.0 : boost::math::gamma_p(p.shape, p.upper / p.scale);
  if (!(f_upper > std::numeric_limits<double>::min())) {
    throw DegenerateSupportError("truncated Gamma: CDF at the upper bound underflows");
  }
  const double u = uniform_open(rng) * f_upper;
  double x = boost::math::gamma_p_inv(p.shape, u) * p.scale;
  if (x >= p.upper) x = std::nextafter(p.upper, 0.0);
  return std::max(x, std::numeric_limits<double>::min());
}

std::vector<double> dirichlet_sample(Rng& rng, std::span<const double> concentration) {
  if (concentration.empty()) throw DomainError("dirichlet_sample: empty concentration");
  std::vector<double> logg(concentration.size());
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    const double a = concentration[i];
    if (!positive_finite(a)) throw DomainError("dirichlet_sample: concentrations must be > 0");
    // log-space draw keeps small shapes from underflowing to an all-zero vector
    if (a < 1.0) {
      logg[i] = std::log(gamma_sample(rng, a + 1.0, 1.0)) + std::log(uniform_open(rng)) / a;
    } else {
      logg[i] = std::log(gamma_sample(rng, a, 1.0));
    }
  }
  const double m = *std::max_element(logg.begin(), logg.end());
  double total = 0.0;
  for (auto& v : logg) {
    v = std::exp(v - m);
    total += v;
  }
  for (auto& v : logg) v /= total;
  return logg;
}

double ShapeConjugateDensity::operator()(double g) const {
  return g * log_base - power * log_gamma(g);
}

double ShapeConjugateDensity::mode() const {
  // invert digamma(g) = log_base / power by Newton iterations on g
  const double y = log_base / power;
  double g = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + 0.5772156649015329);
  for (int it = 0; it < 50; ++it) {
    const double step = (boost::math::digamma(g) - y) / boost::math::trigamma(g);
    double next = g - step;
    if (next <= 0.0) next = g / 2.0;
    if (std::abs(next - g) <= 1e-14 * g) {
      g = next;
      break;
    }
    g = next;
  }
  return g;
}

double ShapeConjugateDensity::laplace_sd() const {
  return 1.0 / std::sqrt(power * boost::math::trigamma(mode()));
}

ShapeConjugateDensity shape_conjugate_density(double a_gamma, double b_gamma, double c_gamma,
                                              double eta, double xi) {
  if (!positive_finite(a_gamma) || !positive_finite(b_gamma) || !positive_finite(c_gamma) ||
      !positive_finite(eta) || !positive_finite(xi)) {
    throw DomainError("gamma-shape conjugate: all inputs must be positive");
  }
  return {std::log(a_gamma) + (c_gamma + 1.0) * std::log(eta) + std::log(xi), b_gamma + 1.0};
}

GridSpec default_shape_grid(const ShapeConjugateDensity& density) {
  GridSpec g;
  g.lower = 1e-3;
  g.upper = density.mode() + 20.0 * density.laplace_sd();
  if (g.upper <= g.lower * 2.0) g.upper = g.lower * 2.0;
  return g;
}

std::vector<double> grid_nodes(const GridSpec& grid) {
  if (!(grid.lower > 0.0) || !(grid.upper > grid.lower) || grid.points < 2) {
    throw DomainError("grid requires 0 < lower < upper and at least 2 points");
  }
  std::vector<double> nodes(grid.points);
  const double n = static_cast<double>(grid.points - 1);
  if (grid.log_spaced) {
    const double l0 = std::log(grid.lower);
    const double l1 = std::log(grid.upper);
    for (std::size_t i = 0; i < grid.points; ++i) {
      nodes[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) / n);
    }
  } else {
    for (std::size_t i = 0; i < grid.points; ++i) {
      nodes[i] = grid.lower + (grid.upper - grid.lower) * static_cast<double>(i) / n;
    }
  }
  nodes.front() = grid.lower;
  nodes.back() = grid.upper;
  return nodes;
}

GridInverseCdf::GridInverseCdf(const GridSpec& grid, const std::vector<double>& log_density)
    : nodes_(grid_nodes(grid)), cdf_(nodes_.size(), 0.0) {
  if (log_density.size() != nodes_.size()) {
    throw DomainError("GridInverseCdf: density size does not match grid");
  }
  const double m = *std::max_element(log_density.begin(), log_density.end());
  if (!std::isfinite(m)) throw GridCoverageError("density is not finite anywhere on the grid");
  double prev = std::exp(log_density[0] - m);
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const double cur = std::exp(log_density[i] - m);
    cdf_[i] = cdf_[i - 1] + 0.5 * (prev + cur) * (nodes_[i] - nodes_[i - 1]);
    prev = cur;
  }
  const double total = cdf_.back();
  if (!(total > 0.0)) throw GridCoverageError("density has no mass on the grid");
  for (auto& c : cdf_) c /= total;
  cdf_.back() = 1.0;
  const double first_cell = cdf_[1];
  const double last_cell = 1.0 - cdf_[cdf_.size() - 2];
  if (first_cell > 1.0 - 1e-8 || last_cell > 1.0 - 1e-8) {
    throw GridCoverageError("density mass sits at a grid boundary; expand the grid range [" +
                            std::to_string(grid.lower) + ", " + std::to_string(grid.upper) + "]");
  }
}

double GridInverseCdf::quantile(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t i = static_cast<std::size_t>(std::distance(cdf_.begin(), it));
  if (i == 0) return nodes_.front();
  if (i >= cdf_.size()) return nodes_.back();
  --i;
  const double width = cdf_[i + 1] - cdf_[i];
  const double frac = width > 0.0 ? (u - cdf_[i]) / width : 0.0;
  return nodes_[i] + frac * (nodes_[i + 1] - nodes_[i]);
}

double GridInverseCdf::sample(Rng& rng) const { return quantile(uniform_open(rng)); }

double gamma_shape_conjugate_sample(Rng& rng, double a_gamma, double b_gamma, double c_gamma,
                                    double eta, double xi, const std::optional<GridSpec>& grid) {
  const auto density = shape_conjugate_density(a_gamma, b_gamma, c_gamma, eta, xi);
  const GridSpec spec = grid ? *grid : default_shape_grid(density);
  const auto nodes = grid_nodes(spec);
  std::vector<double> logd(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) logd[i] = density(nodes[i]);
  return GridInverseCdf(spec, logd).sample(rng);
}

}  // namespace argpois::dist
