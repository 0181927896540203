#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "rwre/core.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"

namespace rwre {

/// Nearest-neighbour transition probabilities, indexed by direction (see dir_axis).
using TransitionVector = std::array<double, kMaxDirs>;

/// Inclusive rectangular region lo <= x <= hi in each of the first d coordinates.
struct Region {
  int d = 2;
  Site lo{};
  Site hi{};

  static Region cube(int d, std::int64_t half_width);
  static Region parse(const std::string& text);  // "-32:32,-32:32"

  bool contains(const Site& x) const;
  std::uint64_t size() const;
  /// Row-major (lexicographic, first coordinate slowest) index of x.
  std::uint64_t index(const Site& x) const;
  Site site(std::uint64_t index) const;
  std::string to_string() const;
};

void validate_kappa(double kappa, int d);
/// Throws InvalidArgument unless p lies in the kappa-simplex.
void validate_transition(const TransitionVector& p, int d, double kappa);

/// Dirichlet parameters for the 2d coordinates; a single value means symmetric.
std::array<double, kMaxDirs> expand_alpha(const std::vector<double>& alpha, int d);

/// 2 kappa + (1 - 4 d kappa) * Dirichlet(alpha) sample.
TransitionVector sample_simplex_point(double kappa, int d, const std::array<double, kMaxDirs>& alpha,
                                      CounterRng& rng);
TransitionVector sample_simplex_point(double kappa, int d, CounterRng& rng);

struct MixingParams {
  double C = 1.0;
  double g = 1.0;
  int r = 1;
  void validate() const;
};

struct IidSource {
  std::uint64_t seed = 0;
  std::array<double, kMaxDirs> alpha{};
};

struct GibbsSource {
  std::uint64_t seed = 0;
  MixingParams mixing;
  std::uint32_t sweeps = 1;
  std::uint32_t candidates = 16;
  std::array<double, kMaxDirs> alpha{};
};

struct ConstantSource {
  TransitionVector probs{};
};

struct ExplicitSource {};

using EnvSource = std::variant<ExplicitSource, IidSource, GibbsSource, ConstantSource>;

std::string source_kind(const EnvSource& s);

/// Immutable environment. Copies share storage.
class Environment {
 public:
  /// Regions above this many sites are evaluated lazily (iid) or rejected (Gibbs).
  static constexpr std::uint64_t kMaterializeLimit = std::uint64_t{1} << 22;

  Environment() = default;

  /// Small regions are materialized unless `lazy`; lazy sites are drawn on every lookup.
  static Environment iid(int d, double kappa, const Region& region, std::uint64_t seed,
                         const std::vector<double>& alpha = {1.0}, bool lazy = false);
  /// Unbounded region unless one is given.
  static Environment constant(int d, double kappa, const TransitionVector& probs);
  static Environment constant(int d, double kappa, const TransitionVector& probs, const Region& region);
  static Environment symmetric(int d, double kappa);
  static Environment gibbs(int d, double kappa, const Region& region, const MixingParams& mixing,
                           std::uint64_t seed, std::uint32_t sweeps, const std::vector<double>& alpha = {1.0},
                           std::uint32_t candidates = 16);
  /// data holds 2d values per site in Region::index order.
  static Environment from_grid(int d, double kappa, const Region& region, std::vector<double> data,
                               EnvSource source = ExplicitSource{});

  int dim() const { return d_; }
  double kappa() const { return kappa_; }
  bool bounded() const { return bounded_; }
  const Region& region() const { return region_; }
  const EnvSource& source() const { return source_; }
  bool materialized() const { return static_cast<bool>(data_); }

  bool in_region(const Site& x) const { return !bounded_ || region_.contains(x); }
  /// Transition vector at x; RegionExhausted when x lies outside the region.
  TransitionVector at(const Site& x) const;
  double prob(const Site& x, int k) const { return at(x)[k]; }

  /// Same environment with the full grid stored.
  Environment materialize() const;

 private:
  int d_ = 2;
  double kappa_ = 0.0;
  bool bounded_ = true;
  Region region_;
  EnvSource source_;
  std::shared_ptr<const std::vector<double>> data_;
};

/// Recipe for a family of independent environments. Member i is seeded with
/// mix64(seed + i); constant kinds ignore the region and stay unbounded.
struct EnsembleSpec {
  std::string kind = "iid";  // iid | gibbs | constant | symmetric
  int d = 2;
  double kappa = 0.05;
  std::vector<double> alpha{1.0};
  TransitionVector probs{};
  MixingParams mixing;
  std::uint32_t sweeps = 1;
  std::uint32_t candidates = 16;
  std::uint64_t seed = 0;

  void validate() const;
  bool deterministic() const { return kind == "constant" || kind == "symmetric"; }
  std::uint64_t member_seed(std::size_t index) const;
  /// `lazy` skips materializing iid members, which suits walks that visit few sites.
  Environment make(std::size_t index, const Region& region, bool lazy = false) const;
};

// Snapshot IO. Little-endian binary; probabilities are re-validated on load.
void write_snapshot(const Environment& env, std::ostream& out);
void write_snapshot(const Environment& env, const std::string& path);
Environment read_snapshot(std::istream& in);
Environment read_snapshot(const std::string& path);
std::vector<char> snapshot_bytes(const Environment& env);

struct MixingReport {
  double bound = 1.0;        // exp(C sum e^{-g|x-y|_1})
  double ratio = 1.0;        // density-ratio proxy at the pooled median
  stats::Interval ratio_ci{1.0, 1.0};
  std::array<double, 3> log_ratio_at_quartiles{};
  std::array<stats::Interval, 3> log_ratio_ci{};
  std::size_t samples = 0;
  std::string verdict;       // holds | fails | inconclusive
};

double mixing_bound(const std::vector<Site>& delta, const std::vector<Site>& a, const MixingParams& m);

/// Splits the ensemble by the mean of omega(y, e1) over A and compares kernel
/// density estimates of the mean of omega(x, e1) over Delta between the halves.
MixingReport mixing_ratio_diagnostic(const std::vector<Environment>& ensemble,
                                     const std::vector<Site>& delta, const std::vector<Site>& a,
                                     const MixingParams& mixing, double level, CounterRng rng);

}  // namespace rwre
