#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

namespace rwre {

/// The forced epsilon pattern of length L: |l_1| copies of sign(l_1) e_1, then
/// |l_2| copies of sign(l_2) e_2, ..., repeated L / |l|_1 times.
struct BarEpsilon {
  DirectionSpec l;
  std::int64_t L = 0;
  double zeta = 0.0;
  std::vector<std::uint8_t> entries;  // direction indices
};

/// Throws unless L is a positive multiple of |l|_1 and every prefix sum lies in C(0, l, zeta).
BarEpsilon bar_epsilon(const DirectionSpec& l, std::int64_t L, double zeta);

/// Smallest multiple of |l|_1 strictly above L_min.
std::int64_t default_regen_L(const DirectionSpec& l, std::int64_t L_min);

struct RegenConfig {
  Site l{1, 0, 0, 0};
  int d = 2;
  std::int64_t L = 1;
  double zeta = -1.0;  // negative: default_zeta(1, d)
  std::int64_t window = 1000;
  double delta = 0.1;
  double drift_floor = 0.05;  // progress needed within the window is delta * window * drift_floor

  DirectionSpec direction() const;
  double zeta_value() const;
  double progress_threshold() const { return delta * static_cast<double>(window) * drift_floor; }
  void validate() const;
};

enum class CandidateStatus { confirmed, cone_exit, no_progress, censored };

std::string to_string(CandidateStatus s);

struct RegenCandidate {
  std::int64_t S = 0;
  CandidateStatus status = CandidateStatus::censored;
  std::int64_t exit_index = -1;  // first index outside the cone (cone_exit)
};

struct RegenRecord {
  std::int64_t horizon = 0;
  std::int64_t window = 0;
  std::int64_t L = 0;
  std::vector<std::int64_t> tau;
  std::vector<Site> positions;  // X_{tau_k}
  std::vector<RegenCandidate> candidates;
  bool tail_censored = false;   // the search after the last tau ran into the horizon
  bool start_confirmed = false;  // D' from time 0 passes the same window rule

  std::vector<std::int64_t> time_increments() const;  // tau_{k+1} - tau_k
  std::vector<Site> increments() const;                // X_{tau_{k+1}} - X_{tau_k}
  nlohmann::json to_json(int d) const;
};

/// Window rule: the walk from `from` stays in C(X_from, l, zeta) for `window`
/// steps and its l-progress reaches the threshold. Returns the status and the
/// exit index for cone exits. `positions` holds X_0..X_H.
RegenCandidate confirm_window(const std::vector<Site>& positions, std::int64_t from, const RegenConfig& cfg);

/// Scans a coupled trajectory for S_n, R_n and the iterates tau_k.
RegenRecord detect_regenerations(const Trajectory& traj, const RegenConfig& cfg);

/// Re-verifies the record property and the epsilon pattern at every tau.
bool verify_record(const Trajectory& traj, const RegenRecord& rec, const RegenConfig& cfg);

struct RegenRunConfig {
  RegenConfig regen;
  std::size_t n_traj = 1000;
  std::int64_t horizon = 20000;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Coupled walks from the origin; trajectory i uses CounterRng(seed).split(i).
std::vector<RegenRecord> simulate_regenerations(const Environment& env, const RegenRunConfig& cfg);
/// Same with environment i of the ensemble for trajectory i.
std::vector<RegenRecord> simulate_regenerations(const EnsembleSpec& ens, const RegenRunConfig& cfg);

/// t = (1/2)(2 ln(1/kappa)/g + 1).
double transversal_t(double kappa, double g);
/// min{(gt - 2 ln(1/kappa)) / (3gt - 2 ln(1/kappa)), ((d-1)gt + 2 ln(1/kappa)) / ((3d+1)gt - 2 ln(1/kappa))}.
double tail_sigma(double kappa, double g, int d);
/// exp(exp(-g t L)) - 1.
double sandwich_slack(double kappa, double g, std::int64_t L, double t = -1.0);

struct TailConfig {
  std::vector<double> u_grid;  // empty: geometric grid up to the largest confirmed tau_1
  double kappa = 0.05;
  int d = 2;
  double g = 7.0;
  double level = 0.95;
  int resamples = 1000;
  std::size_t min_samples = 1000;
  double power = 3.0;          // reference polynomial decay u^-power
  double tail_fraction = 0.1;  // the power comparison uses u with S(u) <= this and >= 10 exceedances
  std::uint64_t seed = 0;
};

struct TailReport {
  std::size_t records = 0;
  std::size_t confirmed = 0;
  std::size_t censored = 0;
  double censoring_fraction = 0.0;
  std::int64_t censor_time = 0;  // survival is only reported below this
  std::int64_t L = 0;
  std::vector<double> u;
  std::vector<double> survival;
  std::vector<stats::Interval> survival_ci;
  double c_hat = 0.0;      // fit of -ln S(u) = c (ln u)^alpha
  double alpha_hat = 0.0;
  std::vector<double> fit_residuals;
  double sigma = 0.0;
  stats::Interval alpha_window;  // (1, 1 + sigma)
  double tail_slope = 0.0;       // log-log slope of S over the far tail
  bool faster_than_power = false;
  double third_moment = 0.0;     // E[(kappa^L tau_1)^3, D' confirmed] / P[D' confirmed]
  stats::Interval third_moment_ci;
  std::string verdict = "inconclusive";
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  std::string survival_csv() const;
};

TailReport tail_and_moments(const std::vector<RegenRecord>& records, const TailConfig& cfg);

struct SandwichConfig {
  RegenConfig regen;
  EnsembleSpec ensemble;
  std::size_t n_samples = 500;     // per batch
  std::int64_t n_steps = 50;       // compare (X_n - X_0) . l at this n
  double level_a = 10.0;           // and the first time (X_n - X_0) . l >= level_a
  std::size_t j = 1;               // post-tau_j increments
  std::int64_t horizon = 20000;
  double g = 7.0;
  double t = -1.0;                 // negative: transversal_t
  int permutations = 500;
  std::size_t max_attempts = 200000;  // fresh conditioned draws
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SandwichReport {
  double slack = 0.0;
  double t = 0.0;
  std::size_t n_post = 0;
  std::size_t n_fresh = 0;
  double ks_position = 0.0;
  double p_position = 0.0;
  double ks_passage = 0.0;
  double p_passage = 0.0;
  double tolerance = 0.0;  // slack + KS critical distance at the 3 sigma level
  bool pass = false;
  double acceptance_rate = 0.0;  // fresh conditioned draws
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Statistics of one batch of walks: (X_n - X_0) . l and the l-passage time.
struct WalkMarginals {
  std::vector<double> position;
  std::vector<double> passage;
  std::size_t attempts = 0;
};

/// Fresh walks conditioned on the window rule for D' from time 0 (rejection sampling).
WalkMarginals fresh_conditioned(const SandwichConfig& cfg, std::uint64_t stream);
/// Post-tau_j marginals, one per trajectory that has tau_j and enough steps after it.
WalkMarginals post_regeneration(const SandwichConfig& cfg, std::uint64_t stream);

/// Two-sample comparison of two marginal batches against the sandwich slack.
SandwichReport compare_marginals(const WalkMarginals& a, const WalkMarginals& b, const SandwichConfig& cfg,
                                 CounterRng rng);

SandwichReport renewal_sandwich_diagnostic(const SandwichConfig& cfg);

}  // namespace rwre
