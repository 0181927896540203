#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"

namespace rwre {

struct StopCondition {
  enum class Kind { box_exit, level_up, level_down, cone_exit, thin_slab, horizon };

  Kind kind = Kind::horizon;
  std::string name;
  BoxSpec box;
  Vec u{};
  double c = 0.0;
  ConeSpec cone;
  std::int64_t n_max = 0;
  std::int64_t slab = 0;
  int d = 2;

  static StopCondition box_exit(const BoxSpec& box, std::string name = "box_exit");
  /// First n >= 0 with X_n . u >= c.
  static StopCondition level_up(const Vec& u, double c, std::string name = "level_up");
  /// First n >= 0 with X_n . u <= c.
  static StopCondition level_down(const Vec& u, double c, std::string name = "level_down");
  /// Level stop along the rotated transverse axis R(e_j), j >= 1; sign +1 is up.
  static StopCondition transverse(const Rotation& r, int j, int sign, double c);
  static StopCondition cone_exit(const ConeSpec& cone, std::string name = "cone_exit");
  /// Entrance into the thin slab around the hyperplane x . ell = i L0.
  static StopCondition thin_slab(const Vec& ell, double L0, std::int64_t i, int d, std::string name);
  static StopCondition horizon(std::int64_t n_max);

  /// Whether the condition holds at time n with position x.
  bool fires(const Site& x, std::int64_t n) const;
};

/// First-of composition; must contain a horizon.
struct StopSpec {
  std::vector<StopCondition> conditions;

  StopSpec() = default;
  explicit StopSpec(std::vector<StopCondition> c);
  void validate() const;
  std::int64_t horizon() const;
  /// Index of the first condition (in list order) that holds, or -1.
  int first_firing(const Site& x, std::int64_t n) const;
};

inline constexpr std::uint8_t kEpsilonZero = 0xff;

struct Trajectory {
  int d = 2;
  Site start{};
  std::vector<std::uint8_t> steps;    // direction indices
  std::vector<std::uint8_t> epsilon;  // coupled chain only; kEpsilonZero marks epsilon = 0
  bool coupled = false;
  int stop_index = -1;                // condition that ended the path
  std::string stop_name;
  Site end{};

  std::int64_t length() const { return static_cast<std::int64_t>(steps.size()); }
  std::vector<Site> positions() const;
  Site position(std::int64_t n) const;
};

/// Walk under P_{x0, omega}. Stops are checked from n = 0 on.
Trajectory simulate_quenched(const Environment& env, const Site& x0, const StopSpec& stop, CounterRng& rng);

/// Coupled chain: epsilon_n ~ Q, and given epsilon_{n+1} = 0 the step follows
/// (omega(X_n, e) - kappa) / (1 - 2 d kappa). `forced` pins the first epsilons.
Trajectory simulate_coupled(const Environment& env, const Site& x0, const StopSpec& stop, CounterRng& rng,
                            const std::vector<std::uint8_t>& forced = {});

/// One step of the coupled chain at a time, for walks too long to store.
/// Consumes the random stream exactly as simulate_coupled does.
class CoupledStepper {
 public:
  CoupledStepper(const Environment& env, const Site& x0, CounterRng rng, std::vector<std::uint8_t> forced = {});

  /// Advances one step and returns (direction index, epsilon).
  std::pair<std::uint8_t, std::uint8_t> advance();
  const Site& position() const { return x_; }
  std::int64_t time() const { return n_; }
  const CounterRng& rng() const { return rng_; }

 private:
  const Environment* env_;
  Site x_;
  CounterRng rng_;
  std::vector<std::uint8_t> forced_;
  std::int64_t n_ = 0;
  double rest_;
};

/// Draws epsilon from Q: each direction with probability kappa, zero otherwise.
std::uint8_t sample_epsilon(double kappa, int d, CounterRng& rng);

/// First hit index of each condition along the stored path (nullopt if not hit).
std::vector<std::optional<std::int64_t>> evaluate_stops(const Trajectory& traj,
                                                        const std::vector<StopCondition>& specs);

struct BatchOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  bool coupled = false;
};

/// Trajectory i uses CounterRng(seed).split(i), so batches are order independent.
std::vector<Trajectory> simulate_batch(const Environment& env, const Site& x0, const StopSpec& stop,
                                       const BatchOptions& opt);

/// Parse "level_up:1,0:5;level_down:1,0:-5;horizon:1000" and similar.
StopSpec parse_stops(const std::string& text, int d);

}  // namespace rwre
