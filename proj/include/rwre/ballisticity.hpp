#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"
#include "rwre/oracle.hpp"
#include "rwre/stats.hpp"

namespace rwre {

enum class Method { exact, monte_carlo };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct MethodSpec {
  Method kind = Method::exact;
  std::size_t n_walks = 10000;          // per start site (MC)
  std::int64_t horizon = 10'000'000;    // MC safety horizon; censored walks are reported
  std::size_t state_cap = kDefaultStateCap;
};

struct RhoSample {
  std::size_t env_id = 0;
  BoxSpec box;
  double q = 0.0;  // non-frontal exit probability
  double p = 0.0;  // frontal exit probability
  double rho = 0.0;
  Method method = Method::exact;
  std::size_t n = 0;          // MC walks
  double ci = 0.0;            // MC half-width of q
  bool infinite = false;      // MC saw no frontal exit
  double rho_ellipticity_bound = 0.0;  // (1 - (2 kappa)^k) / (2 kappa)^k, k = shortest frontal path
  std::size_t censored = 0;
};

/// Three-valued verdict for "quantity < threshold".
std::string verdict_below(const stats::Interval& ci, double threshold);

struct ConditionReport {
  std::string condition;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json estimates = nlohmann::json::object();
  std::string verdict = "inconclusive";
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Length of a shortest lattice path inside the box from start to its frontal boundary.
std::int64_t frontal_distance(const BoxSpec& box, const Site& start);

RhoSample estimate_rho(const Environment& env, const BoxSpec& box, const MethodSpec& method, CounterRng rng,
                       const Site& start = Site{}, int threads = 1);

struct MomentEstimate {
  double a = 1.0;
  double estimate = 0.0;
  stats::Interval ci;
  std::size_t infinite = 0;
  bool upper_bound_only = false;
  std::vector<RhoSample> samples;
};

/// Mean of rho^a with a bootstrap interval. Samples with rho = +inf enter with
/// their ellipticity bound, so the result is then an upper bound.
MomentEstimate moment_from_samples(double a, std::vector<RhoSample> samples, double level, int resamples,
                                   CounterRng rng);

/// Lattice region containing the box and its outer boundary.
Region box_region(const BoxSpec& box, std::int64_t pad = 2);

std::vector<RhoSample> rho_ensemble(const BoxSpec& box, const EnsembleSpec& ens, std::size_t m_env,
                                    const MethodSpec& method, std::uint64_t seed, int threads);

MomentEstimate annealed_rho_moment(double a, const BoxSpec& box, const EnsembleSpec& ens, std::size_t m_env,
                                   const MethodSpec& method, std::uint64_t seed, int threads = 1,
                                   double level = 0.95, int resamples = 2000);

/// C' L~^{d-1} L^{4(d-1)+1} m.
double ec_product(double c_prime, int d, double L, double L_tilde, double moment);

struct EcConfig {
  Site l{1, 0, 0, 0};
  std::vector<double> L_grid{10};
  std::vector<double> Lt_grid{20};
  std::vector<double> a_grid{0.5};
  double c_prime = 1.0;
  double c_dprime = -1.0;  // negative means 3 sqrt(d)
  EnsembleSpec ensemble;
  std::size_t m_env = 200;
  MethodSpec method;
  double level = 0.95;
  int resamples = 2000;
  std::uint64_t seed = 0;
  int threads = 1;
};

ConditionReport effective_criterion_check(const EcConfig& cfg);

struct PjConfig {
  Site l{1, 0, 0, 0};
  double N0 = 11;
  double J = 1;
  PolyBoxShape shape;
  EnsembleSpec ensemble;
  std::size_t m_env = 50;
  MethodSpec method;
  std::size_t max_starts = 1000;  // larger B~1 boxes use a stratified subsample (MC)
  double level = 0.95;
  int resamples = 2000;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// floor(15 nu_1 N0 ln(1/(2 kappa)) / (2 ln N0)) + 1, the per-level scale multiplier.
std::int64_t poly_scale_multiplier(double N0, double nu1, double kappa);

/// Start sites for the sup: all of B~1 when small, else an evenly spaced grid
/// (every axis sampled at equally spaced quantiles, corners included).
std::vector<Site> poly_start_sites(const BoxSpec& tilde_b1, std::size_t max_starts);

ConditionReport polynomial_condition_check(const PjConfig& cfg);

struct TgammaConfig {
  Site l{1, 0, 0, 0};
  double b = 1.0;
  std::vector<double> levels{4, 6, 8, 10};
  std::size_t n_walks = 10000;
  EnsembleSpec ensemble;
  std::size_t m_env = 0;          // 0: a fresh environment per walk
  std::int64_t region_half_width = 1 << 20;
  bool exact = false;             // deterministic ensembles only
  std::int64_t horizon = 10'000'000;
  std::vector<double> j_reference;
  double level = 0.95;
  int resamples = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TgammaLevel {
  double L = 0.0;
  std::size_t n = 0;
  std::size_t hits = 0;
  std::size_t censored = 0;
  double p = 0.0;
  stats::Interval ci;
  bool rare = false;  // zero hits; p is the Clopper-Pearson upper bound
};

/// Least-squares fit of ln(-ln p_L) on ln L over the levels with 0 < p_L < 1.
stats::LinearFit tgamma_fit(const std::vector<double>& L, const std::vector<double>& p);

ConditionReport tgamma_decay_fit(const TgammaConfig& cfg);

struct SlabConfig {
  Site l{1, 0, 0, 0};
  double L0 = 4;
  double L1 = 12;
  double Lt1 = 12;
  double margin = -1;  // transverse truncation beyond Lt1; negative means 4 L0
  std::size_t state_cap = kDefaultStateCap;
  std::size_t mc_walks = 2000;  // per start site when the exact solve is too large
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SlabQuantities {
  double L0 = 0.0;
  double L1 = 0.0;
  double Lt1 = 0.0;
  std::int64_t n0 = 0;
  /// Sup of q/p over the capped thin slab. Walks leaving the transverse
  /// truncation count as backward exits in rho_hat and as forward exits in
  /// rho_hat_lower, which bracket the untruncated value.
  std::map<std::int64_t, double> rho_hat;
  std::map<std::int64_t, double> rho_hat_lower;
  std::map<std::int64_t, double> f_values;
  double bound = 0.0;        // f(0) / f(-n0 + 1) from rho_hat
  double bound_lower = 0.0;  // same from rho_hat_lower
  bool exact = true;
  std::vector<std::string> warnings;
};

/// f(n0+2) = 0 and f(i) = sum_{i <= j <= n0+1} prod_{j < m <= n0+1} rho_m^{-1} for i >= lo.
std::map<std::int64_t, double> slab_f_function(const std::map<std::int64_t, double>& rho, std::int64_t n0,
                                               std::int64_t lo);
double slab_f_ratio(const std::map<std::int64_t, double>& f, std::int64_t n0);

/// Sites of the thin slab H_i whose transverse coordinates are below Lt1 in absolute value.
std::vector<Site> thin_slab_sites(const Rotation& r, const Vec& ell, double L0, std::int64_t i, double Lt1);

SlabQuantities slab_quantities(const Environment& env, const SlabConfig& cfg);

struct SlabBoundCheck {
  double lhs = 0.0;
  double sigma = 0.0;
  std::size_t n = 0;
  std::size_t hits = 0;
  std::size_t censored = 0;
  double bound = 0.0;
  bool holds = false;  // lhs <= bound + 3 sigma
};

/// MC estimate of P_0[T~_{-L1+1} < T^ and T_{L1+1}] on the same environment.
SlabBoundCheck slab_bound_check(const Environment& env, const SlabConfig& cfg, double bound, std::size_t n_walks,
                                std::int64_t horizon = 10'000'000);

}  // namespace rwre
