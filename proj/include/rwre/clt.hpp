#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"
#include "rwre/regeneration.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

namespace rwre {

struct VelocityConfig {
  std::size_t min_blocks = 1000;       // ratio estimator needs this many regeneration blocks
  std::size_t min_trajectories = 100;  // plug-in estimator needs this many endpoints
  double level = 0.95;
  int resamples = 1000;
  std::uint64_t seed = 0;
};

/// Endpoints X_H of independent walks run to a common horizon H.
struct EndpointSample {
  std::vector<Site> endpoints;
  std::int64_t horizon = 0;
};

struct VelocityEstimate {
  int d = 2;
  bool has_ratio = false;
  bool has_plugin = false;
  bool has_direction = false;
  Vec v_ratio{};   // E[X_{tau_2} - X_{tau_1}] / E[tau_2 - tau_1]
  Vec v_plugin{};  // mean of X_H / H
  std::array<stats::Interval, kMaxDim> ci_ratio{};
  std::array<stats::Interval, kMaxDim> ci_plugin{};
  Vec v_hat_L{};   // normalized mean of X_{tau_1} over walks with D' = infinity from time 0
  std::size_t n_blocks = 0;
  std::size_t n_trajectories = 0;
  std::size_t n_direction = 0;
  bool consistent = true;  // both estimators agree within the joint interval, coordinatewise
  std::vector<std::string> warnings;

  /// Plug-in when available, ratio otherwise.
  Vec v_hat() const;
  std::array<stats::Interval, kMaxDim> ci() const;
  /// v_hat . ell > 0 with the whole interval of the projection above zero.
  bool ballistic(const Vec& ell) const;
  nlohmann::json to_json() const;
};

/// Either input may be empty; throws InvalidArgument when neither meets its minimum.
VelocityEstimate estimate_velocity(const std::vector<RegenRecord>& records, const EndpointSample& endpoints,
                                   int d, const VelocityConfig& cfg);

/// z - (z . v) v; v must be a unit vector within 1e-10.
Vec project_orthogonal(const Vec& z, const Vec& v);

/// Reference exponents: the varsigma window ((gt + 2 ln(1/kappa)) / (2gt), 1), the beta
/// window (2gt / (3gt - 2 ln(1/kappa)), 1), the epsilon of a varsigma and the chi bound of a beta.
stats::Interval varsigma_window(double kappa, double g);
stats::Interval beta_window(double kappa, double g);
double fluctuation_epsilon(double kappa, double g, double varsigma);
double chi_bound(double kappa, double g, int d, double beta);

struct TransversalConfig {
  Site l{1, 0, 0, 0};
  int d = 2;
  double M = 50.0;
  double eta = 1.0;
  std::vector<double> varsigma;  // empty: five points inside the window
  std::int64_t excursion = 1000;  // steps above M that confirm the last visit
  double kappa = 0.05;
  double g = 7.0;
  double level = 0.95;
};

struct TransversalReport {
  double M = 0.0;
  double eta = 0.0;
  std::size_t trajectories = 0;
  std::size_t confirmed = 0;
  std::vector<double> sup_norm;       // sup_{n <= L_M} |Pi(X_n)|_2, confirmed walks only
  std::vector<double> signed_second;  // Pi(X_{L_M}) . R(e_2), confirmed walks only
  std::vector<double> varsigma;
  std::vector<bool> varsigma_in_window;
  std::vector<double> threshold;      // eta M^varsigma
  std::vector<double> exceedance;
  std::vector<stats::Interval> exceedance_ci;
  stats::Interval window;
  std::vector<double> epsilon;        // reference value per varsigma
  double sign_test_p = 1.0;           // two-sided sign test of signed_second about 0
  std::string verdict = "inconclusive";
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  std::string samples_csv() const;
};

/// L_M = sup{n : X_n . l <= M} over each stored path; the last visit is confirmed
/// when at least `excursion` steps follow it before the horizon.
TransversalReport transversal_fluctuation_stat(const std::vector<Trajectory>& trajectories, const Vec& v_hat_L,
                                               const TransversalConfig& cfg);

struct CltConfig {
  std::vector<std::int64_t> n_grid{10000};
  std::vector<Vec> directions;               // empty: coordinate axes
  std::vector<double> t_grid{0.25, 0.5};
  double alpha = 0.01;
  std::size_t min_samples = 300;
  double level = 0.95;
  int resamples = 1000;
  std::uint64_t seed = 0;
};

struct CltDirectionResult {
  Vec w{};
  double mean = 0.0;            // mean of S_n(1) . w
  double mean_tolerance = 0.0;  // z sd / sqrt(N) plus sqrt(n) times the half-width of v . w
  double sd = 0.0;
  stats::NormalityResult normality;
  std::vector<double> t;
  std::vector<double> variance_ratio;  // Var at nt over Var at n
  std::vector<stats::Interval> variance_ratio_ci;
  std::vector<bool> scaling_ok;        // t inside the interval
};

struct CltLevel {
  std::int64_t n = 0;
  std::size_t samples = 0;
  std::vector<CltDirectionResult> directions;
  std::vector<std::vector<double>> standardized;  // per direction
};

struct CltReport {
  int d = 2;
  Vec v_used{};
  std::vector<CltLevel> levels;
  std::vector<std::vector<double>> R;  // covariance per unit time
  std::vector<std::vector<stats::Interval>> R_ci;
  std::vector<double> R_eigenvalues;
  bool R_psd = false;
  std::string R_source;  // "regeneration_blocks" or "endpoints"
  std::string normality_test = "anderson_darling";
  double alpha = 0.01;
  bool normal_ok = false;
  bool scaling_ok = false;
  std::string verdict = "inconclusive";
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  std::string samples_csv() const;
};

/// S_n(t) = (X_[nt] - v n t) / sqrt(n) from stored paths of length >= max n.
/// R is estimated from regeneration blocks when `blocks` has at least two
/// increments, otherwise from Cov(X_n) / n at the largest n.
CltReport clt_scaling_check(const std::vector<Trajectory>& trajectories, const Vec& v, const CltConfig& cfg,
                            const std::vector<RegenRecord>& blocks = {},
                            const std::array<stats::Interval, kMaxDim>& v_ci = {});

/// Largest eigenvalue tolerance for positive semidefiniteness.
inline constexpr double kPsdTolerance = 1e-8;

struct AtypicalConfig {
  EnsembleSpec ensemble;
  Site l{1, 0, 0, 0};
  double M = 6.0;
  double beta = 0.97;
  double c = 1.0;
  double g = 7.0;
  std::size_t n_env = 100;
  double transverse = -1.0;        // half-width of the transverse truncation; negative: 10 M
  std::size_t state_cap = 200000;  // larger problems fall back to Monte Carlo
  std::size_t n_walks = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct AtypicalReport {
  double threshold = 0.0;  // exp(-c M^beta)
  stats::Interval window;
  bool beta_in_window = false;
  double chi = 0.0;
  std::size_t environments = 0;
  std::size_t exact = 0;
  std::size_t below = 0;      // forward exit certainly below the threshold
  std::size_t undecided = 0;  // the forward-exit interval straddles the threshold
  double frequency = 0.0;
  stats::Interval frequency_ci;
  double frequency_upper = 0.0;  // one-sided
  std::vector<double> forward_lo;  // per environment bounds on P[X_T . ell > 0]
  std::vector<double> forward_hi;
  std::string verdict = "inconclusive";
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Per environment, P_{0,omega}[X_T . ell > 0] for the exit time T of
/// U_M = {|x . ell| < M}, truncated transversally; side exits widen the bounds.
AtypicalReport atypical_quenched_frequency(const AtypicalConfig& cfg);

}  // namespace rwre
