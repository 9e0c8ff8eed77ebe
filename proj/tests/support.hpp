#pragma once

// Statistical helpers shared by the test binaries. Nothing here calls into the
// library, so these serve as independent references.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

struct Moments {
  double mean = 0.0;
  double var = 0.0;       // unbiased
  double mean_se = 0.0;
  double var_se = 0.0;    // delta-method SE of the sample variance
};

inline Moments moments(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  long double s = 0.0L;
  for (double v : x) s += v;
  const double m = static_cast<double>(s / n);
  long double m2 = 0.0L, m4 = 0.0L;
  for (double v : x) {
    const long double d = v - m;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  Moments out;
  out.mean = m;
  out.var = static_cast<double>(m2 / (n - 1.0));
  out.mean_se = std::sqrt(out.var / n);
  const double mu4 = static_cast<double>(m4 / n);
  const double mu2 = static_cast<double>(m2 / n);
  out.var_se = std::sqrt(std::max(mu4 - mu2 * mu2, 0.0) / n);
  return out;
}

/// Asymptotic Kolmogorov survival function with the Stephens small-sample
/// correction, for effective sample size `n`.
inline double kolmogorov_pvalue(double d, double n) {
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

/// One-sample KS statistic against a continuous CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline double ks_pvalue(const std::vector<double>& x, const std::function<double(double)>& cdf) {
  return kolmogorov_pvalue(ks_statistic(x, cdf), static_cast<double>(x.size()));
}

inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return kolmogorov_pvalue(d, na * nb / (na + nb));
}

/// Total variation distance between a histogram of `draws` and a density
/// tabulated at cell midpoints of equal-width bins on [lo, hi].
inline double histogram_tv(const std::vector<double>& draws, double lo, double hi,
                           const std::vector<double>& density_mass) {
  const std::size_t bins = density_mass.size();
  std::vector<double> counts(bins, 0.0);
  double outside = 0.0;
  for (double v : draws) {
    if (v < lo || v >= hi) {
      outside += 1.0;
      continue;
    }
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    counts[std::min(b, bins - 1)] += 1.0;
  }
  const double n = static_cast<double>(draws.size());
  double tv = outside / n;
  for (std::size_t b = 0; b < bins; ++b) tv += std::abs(counts[b] / n - density_mass[b]);
  return 0.5 * tv;
}

/// Effective sample size from the initial positive sequence of autocorrelations.
inline double effective_size(const std::vector<double>& x) {
  const auto m = moments(x);
  const std::size_t n = x.size();
  if (m.var <= 0.0) return static_cast<double>(n);
  double tau = 1.0;
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    double c = 0.0;
    for (std::size_t i = lag; i < n; ++i) c += (x[i] - m.mean) * (x[i - lag] - m.mean);
    const double rho = c / (static_cast<double>(n) * m.var);
    if (rho < 0.05) break;
    tau += 2.0 * rho;
  }
  return static_cast<double>(n) / tau;
}

/// Standard error of the mean of a correlated series by non-overlapping batch means.
inline double batch_means_se(const std::vector<double>& x, std::size_t batches = 200) {
  const std::size_t size = x.size() / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < size; ++i) means[b] += x[b * size + i];
    means[b] /= static_cast<double>(size);
  }
  return moments(means).mean_se;
}

struct Ols {
  double intercept, slope, intercept_se, slope_se;
};

// y = a + b x by least squares with heteroskedasticity-robust (HC0) errors.
inline Ols ols_hc0(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Ols o;
  o.slope = sxy / sxx;
  o.intercept = my - o.slope * mx;
  double vs = 0.0, vi = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - o.intercept - o.slope * x[i];
    const double d = x[i] - mx;
    vs += d * d * e * e;
    const double g = 1.0 / n - mx * d / sxx;  // influence of point i on the intercept
    vi += g * g * e * e;
  }
  o.slope_se = std::sqrt(vs) / sxx;
  o.intercept_se = std::sqrt(vi);
  return o;
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("argpois_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace testing
