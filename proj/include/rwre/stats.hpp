#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rwre/rng.hpp"

namespace rwre::stats {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
};

double mean(std::span<const double> xs);
/// Unbiased sample variance; 0 for fewer than two samples.
double variance(std::span<const double> xs);
double stddev(std::span<const double> xs);
double covariance(std::span<const double> xs, std::span<const double> ys);

double normal_quantile(double p);
double normal_cdf(double x);

/// Percentile bootstrap for an arbitrary statistic of one sample.
Interval bootstrap_ci(std::span<const double> xs,
                      const std::function<double(std::span<const double>)>& statistic,
                      int resamples, double level, CounterRng rng);

Interval bootstrap_mean_ci(std::span<const double> xs, int resamples, double level, CounterRng rng);

/// Ratio-of-means bootstrap, resampling (num_i, den_i) pairs jointly.
Interval bootstrap_ratio_ci(std::span<const double> num, std::span<const double> den,
                            int resamples, double level, CounterRng rng);

/// Two-sided exact binomial interval.
Interval clopper_pearson(std::size_t successes, std::size_t trials, double level);
/// One-sided exact upper bound for the success probability.
double clopper_pearson_upper(std::size_t successes, std::size_t trials, double level);

/// Standard error of a binomial frequency, sqrt(p(1-p)/n).
double binomial_sigma(double p, std::size_t n);

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);
/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
double ks_pvalue_asymptotic(double distance, std::size_t n, std::size_t m);
/// Randomized permutation p-value for the KS distance. Exactly uniform under
/// exchangeability, including for discrete data with ties.
double ks_pvalue_permutation(std::span<const double> a, std::span<const double> b, int permutations,
                             CounterRng rng);
/// KS critical distance at two-sided level alpha (asymptotic).
double ks_critical(std::size_t n, std::size_t m, double alpha);

struct NormalityResult {
  double statistic = 0.0;  // Anderson-Darling A*^2 (mean and variance estimated)
  double p_value = 0.0;
  bool reject = false;
  double alpha = 0.01;
};

NormalityResult anderson_darling_normal(std::span<const double> xs, double alpha);

/// Pearson chi-square test that values lie uniformly on [0,1]; returns p-value.
double chi_square_uniform_pvalue(std::span<const double> xs, int bins);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  std::vector<double> residuals;
};

LinearFit least_squares(std::span<const double> x, std::span<const double> y);

double quantile(std::vector<double> xs, double q);

}  // namespace rwre::stats
