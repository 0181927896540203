#include "rwre/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "rwre/core.hpp"

namespace rwre::stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double stddev(std::span<const double> xs) { return std::sqrt(variance(xs)); }

double covariance(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "covariance: size mismatch");
  if (xs.size() < 2) return 0.0;
  const double mx = mean(xs);
  const double my = mean(ys);
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (xs[i] - mx) * (ys[i] - my);
  return s / static_cast<double>(xs.size() - 1);
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<>(), p);
}

double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<>(), x); }

Interval bootstrap_ci(std::span<const double> xs,
                      const std::function<double(std::span<const double>)>& statistic,
                      int resamples, double level, CounterRng rng) {
  require(!xs.empty(), "bootstrap: empty sample");
  std::vector<double> stats;
  stats.reserve(resamples);
  std::vector<double> buf(xs.size());
  const auto n = static_cast<std::uint64_t>(xs.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& v : buf) v = xs[rng() % n];
    stats.push_back(statistic(buf));
  }
  const double tail = (1.0 - level) / 2.0;
  return {quantile(stats, tail), quantile(stats, 1.0 - tail)};
}

Interval bootstrap_mean_ci(std::span<const double> xs, int resamples, double level, CounterRng rng) {
  return bootstrap_ci(xs, [](std::span<const double> s) { return mean(s); }, resamples, level, rng);
}

Interval bootstrap_ratio_ci(std::span<const double> num, std::span<const double> den, int resamples,
                            double level, CounterRng rng) {
  require(num.size() == den.size() && !num.empty(), "bootstrap_ratio_ci: bad sizes");
  const auto n = static_cast<std::uint64_t>(num.size());
  std::vector<double> ratios;
  ratios.reserve(resamples);
  for (int b = 0; b < resamples; ++b) {
    double sn = 0.0;
    double sd = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto j = rng() % n;
      sn += num[j];
      sd += den[j];
    }
    ratios.push_back(sd != 0.0 ? sn / sd : 0.0);
  }
  const double tail = (1.0 - level) / 2.0;
  return {quantile(ratios, tail), quantile(ratios, 1.0 - tail)};
}

Interval clopper_pearson(std::size_t k, std::size_t n, double level) {
  require(n > 0 && k <= n, "clopper_pearson: need 0 <= k <= n, n > 0");
  const double a = (1.0 - level) / 2.0;
  Interval iv;
  iv.lo = k == 0 ? 0.0
                 : boost::math::quantile(
                       boost::math::beta_distribution<>(static_cast<double>(k),
                                                        static_cast<double>(n - k + 1)),
                       a);
  iv.hi = k == n ? 1.0
                 : boost::math::quantile(
                       boost::math::beta_distribution<>(static_cast<double>(k + 1),
                                                        static_cast<double>(n - k)),
                       1.0 - a);
  return iv;
}

double clopper_pearson_upper(std::size_t k, std::size_t n, double level) {
  require(n > 0 && k <= n, "clopper_pearson_upper: need 0 <= k <= n, n > 0");
  if (k == n) return 1.0;
  return boost::math::quantile(
      boost::math::beta_distribution<>(static_cast<double>(k + 1), static_cast<double>(n - k)), level);
}

double binomial_sigma(double p, std::size_t n) {
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), "ks_statistic: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double ks_pvalue_asymptotic(double distance, std::size_t n, std::size_t m) {
  const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
  const double s = std::sqrt(ne);
  const double lambda = (s + 0.12 + 0.11 / s) * distance;
  if (lambda < 1e-3) return 1.0;
  double q = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    q += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

double ks_pvalue_permutation(std::span<const double> a, std::span<const double> b, int permutations,
                             CounterRng rng) {
  const double observed = ks_statistic(a, b);
  std::vector<double> pool(a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  const std::size_t n = a.size();
  std::size_t greater = 0;
  std::size_t equal = 0;
  for (int p = 0; p < permutations; ++p) {
    for (std::size_t i = pool.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(pool[i], pool[j]);
    }
    const double d = ks_statistic(std::span(pool).first(n), std::span(pool).subspan(n));
    if (d > observed + 1e-12) {
      ++greater;
    } else if (d >= observed - 1e-12) {
      ++equal;
    }
  }
  const double u = rng.uniform();
  return (static_cast<double>(greater) + u * static_cast<double>(equal + 1)) /
         static_cast<double>(permutations + 1);
}

double ks_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

NormalityResult anderson_darling_normal(std::span<const double> xs, double alpha) {
  require(xs.size() >= 8, "anderson_darling_normal: need at least 8 samples");
  std::vector<double> z(xs.begin(), xs.end());
  const double m = mean(z);
  const double s = stddev(z);
  require(s > 0.0, "anderson_darling_normal: zero variance sample");
  for (auto& v : z) v = (v - m) / s;
  std::sort(z.begin(), z.end());
  const auto n = static_cast<double>(z.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double fi = std::clamp(normal_cdf(z[i]), 1e-300, 1.0 - 1e-16);
    const double fr = std::clamp(normal_cdf(z[z.size() - 1 - i]), 1e-300, 1.0 - 1e-16);
    acc += (2.0 * static_cast<double>(i) + 1.0) * (std::log(fi) + std::log1p(-fr));
  }
  const double a2 = -n - acc / n;
  const double a = a2 * (1.0 + 0.75 / n + 2.25 / (n * n));
  double p = 0.0;
  if (a >= 0.6) {
    p = std::exp(1.2937 - 5.709 * a + 0.0186 * a * a);
  } else if (a >= 0.34) {
    p = std::exp(0.9177 - 4.279 * a - 1.38 * a * a);
  } else if (a > 0.2) {
    p = 1.0 - std::exp(-8.318 + 42.796 * a - 59.938 * a * a);
  } else {
    p = 1.0 - std::exp(-13.436 + 101.14 * a - 223.73 * a * a);
  }
  NormalityResult r;
  r.statistic = a;
  r.p_value = std::clamp(p, 0.0, 1.0);
  r.alpha = alpha;
  r.reject = r.p_value < alpha;
  return r;
}

double chi_square_uniform_pvalue(std::span<const double> xs, int bins) {
  require(bins >= 2 && !xs.empty(), "chi_square_uniform_pvalue: need bins >= 2 and data");
  std::vector<double> counts(bins, 0.0);
  for (double x : xs) {
    int k = static_cast<int>(std::floor(x * bins));
    counts[std::clamp(k, 0, bins - 1)] += 1.0;
  }
  const double expected = static_cast<double>(xs.size()) / bins;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<>(bins - 1), chi2));
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "least_squares: need >= 2 paired points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, "least_squares: degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    f.residuals.push_back(r);
    rss += r * r;
  }
  if (x.size() > 2) f.slope_se = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
  return f;
}

double quantile(std::vector<double> xs, double q) {
  require(!xs.empty(), "quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

}  // namespace rwre::stats
