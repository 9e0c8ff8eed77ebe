#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "argpois/rng.hpp"

/// Probability kernels used by the model. Gamma laws are parametrized by
/// shape and scale throughout; a "rate" never appears in a signature.
namespace argpois::dist {

/// Non-central Gamma NcGa(shape, noncentrality, scale): a Poisson(noncentrality)
/// mixture of Gamma(shape + k, scale).
struct NcGaParams {
  double shape = 1.0;
  double noncentrality = 0.0;
  double scale = 1.0;

  void validate() const;
  double mean() const { return scale * (shape + noncentrality); }
  double variance() const { return scale * scale * (shape + 2.0 * noncentrality); }
};

/// Gamma(shape, scale) restricted to (0, upper).
struct TruncGammaParams {
  double shape = 1.0;
  double scale = 1.0;
  double upper = 1.0;

  void validate() const;
};

inline constexpr double kDefaultSeriesTol = 1e-12;

/// Thread-safe log|Gamma(x)|.
double log_gamma(double x);

double gamma_logpdf(double x, double shape, double scale);

double poisson_logpmf(std::int64_t k, double lambda);

/// Log density of NcGa at x. The Poisson mixing series is truncated once the
/// discarded Poisson(b) tail mass falls below `tol`.
double ncga_logpdf(double x, const NcGaParams& p, double tol = kDefaultSeriesTol);

/// Number of mixture terms ncga_logpdf would sum (diagnostic).
std::size_t ncga_series_terms(double noncentrality, double tol = kDefaultSeriesTol);

double ncga_sample(Rng& rng, const NcGaParams& p);

std::int64_t poisson_sample(Rng& rng, double mean);
double gamma_sample(Rng& rng, double shape, double scale);
double normal_sample(Rng& rng, double mean, double sd);

double trunc_gamma_logpdf(double x, const TruncGammaParams& p);
double trunc_gamma_cdf(double x, const TruncGammaParams& p);
double trunc_gamma_sample(Rng& rng, const TruncGammaParams& p);

std::vector<double> dirichlet_sample(Rng& rng, std::span<const double> concentration);

/// Unnormalized log density of the Gamma-shape conjugate posterior,
///   log f(g) = g * log(a_g * eta^(c_g + 1) * xi) - (b_g + 1) * log Gamma(g).
struct ShapeConjugateDensity {
  double log_base = 0.0;
  double power = 1.0;

  double operator()(double g) const;
  /// Root of log_base = power * digamma(g).
  double mode() const;
  /// Laplace standard deviation at the mode.
  double laplace_sd() const;
};

ShapeConjugateDensity shape_conjugate_density(double a_gamma, double b_gamma, double c_gamma,
                                              double eta, double xi);

struct GridSpec {
  double lower = 1e-3;
  double upper = 1.0;
  std::size_t points = 4096;
  bool log_spaced = true;
};

/// Log-spaced grid on (1e-3, mode + 20 * laplace_sd).
GridSpec default_shape_grid(const ShapeConjugateDensity& density);

/// Piecewise-linear inverse-CDF table of a density tabulated on a grid.
class GridInverseCdf {
 public:
  GridInverseCdf(const GridSpec& grid, const std::vector<double>& log_density);
  double sample(Rng& rng) const;
  double quantile(double u) const;
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& cdf() const { return cdf_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> cdf_;
};

std::vector<double> grid_nodes(const GridSpec& grid);

double gamma_shape_conjugate_sample(Rng& rng, double a_gamma, double b_gamma, double c_gamma,
                                    double eta, double xi,
                                    const std::optional<GridSpec>& grid = std::nullopt);

}  // namespace argpois::dist
