#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "rwre/ballisticity.hpp"
#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"

namespace rwre {

using BigInt = boost::multiprecision::cpp_int;

struct EcLevel {
  int k = 0;
  double L = 0.0;
  double Lt = 0.0;
  double N = 0.0;  // L_{k+1} / L_k
  double a = 0.0;
  double u = 0.0;
};

struct ScaleLadderEC {
  int d = 2;
  double nu1 = 0.0;
  double v = 16.0;
  double alpha = 320.0;
  double L0 = 0.0;
  double Lt0 = 0.0;
  double u0 = 0.0;
  double a0 = 0.0;
  std::vector<EcLevel> levels;
};

/// N_k = (alpha nu_1 / u0) v^k, L_{k+1} = N_k L_k, L~_{k+1} = N_k^4 L~_k, a_k = a0 4^-k, u_k = u0 v^-k.
ScaleLadderEC build_ladder_ec(int d, double L0, double Lt0, double u0, double a0, int k_max);
/// L_k = (alpha nu_1 / u0)^k v^{k(k-1)/2} L0.
double ec_closed_form_L(const ScaleLadderEC& ladder, int k);
/// L~_k = (L_k / L0)^4 L~0.
double ec_closed_form_Lt(const ScaleLadderEC& ladder, int k);
/// phi = c L~_{k+1}^{d-1} L_k m, compared against (2 kappa)^{u_k L_k} in the seed estimate.
double ec_phi(double c, int d, double Lt_next, double L_k, double moment);

struct PolyLadderConfig {
  std::int64_t N0 = 11;
  double kappa = 0.05;
  int d = 2;
  int k_max = 2;
  std::int64_t v = 44;
  std::int64_t multiplier = 0;  // 0: floor(15 nu_1 N0 ln(1/(2 kappa)) / (2 ln N0)) + 1
  PolyBoxShape shape;
  double threshold_exponent = 5.0;  // good iff inf frontal probability > 1 - N0^-exponent
  std::string preset = "paper";

  /// Structurally identical small ladder: divisors 3 and 2, transverse exponent 1,
  /// v = 6, multiplier 1, threshold exponent 1.
  static PolyLadderConfig mini(std::int64_t N0, double kappa, int d, int k_max);
};

struct ScaleLadderPoly {
  PolyLadderConfig cfg;
  BigInt seed_multiplier;
  std::vector<BigInt> N;      // N_0 .. N_kmax
  std::vector<BigInt> ratio;  // ratio[k] = N_k / N_{k-1} for k >= 1 (ratio[0] = 1)
  std::int64_t required_divisor = 110;
  bool divisible = false;

  double scale(int k) const;
  double transverse_scale(int k) const;  // N_k^exponent
};

/// Seed multiplier evaluated with 50-digit decimal arithmetic.
std::int64_t poly_seed_multiplier(std::int64_t N0, int d, double kappa);

ScaleLadderPoly build_ladder_poly(const PolyLadderConfig& cfg);

nlohmann::json ladder_json(const ScaleLadderEC& ladder);
nlohmann::json ladder_json(const ScaleLadderPoly& ladder);

/// Boxes of scale k anchored at z = (n_0 N_k, n_1 N_k^e, ...) in rotated coordinates.
class BoxLattice {
 public:
  BoxLattice(const ScaleLadderPoly& ladder, const Rotation& rot) : ladder_(&ladder), rot_(rot) {}

  const ScaleLadderPoly& ladder() const { return *ladder_; }
  const Rotation& rotation() const { return rot_; }
  int dim() const { return rot_.dim(); }

  Vec anchor(int k, const Site& index) const;
  BoxSpec b2(int k, const Site& index) const;
  BoxSpec tilde1(int k, const Site& index) const;
  BoxSpec dot1(int k, const Site& index) const;

  /// Indices y at level k-1 with dot B_{1,k-1}(y) contained in B_{2,k}(index), as lattice point sets.
  std::vector<Site> sub_boxes(int k, const Site& index) const;

  /// Sites of B_{2,k}(index) outside every B~_{1,k-1}(y) with y from sub_boxes.
  std::size_t uncovered_sites(int k, const Site& index) const;

 private:
  const ScaleLadderPoly* ladder_;
  Rotation rot_;
};

/// Lattice-point inclusion and intersection of boxes sharing one rotation.
bool lattice_subset(const BoxSpec& inner, const BoxSpec& outer);
bool lattice_intersect(const BoxSpec& a, const BoxSpec& b);

struct BoxStatus {
  bool good = false;
  std::optional<Site> witness;  // level >= 1 good boxes
  double inf_frontal = 0.0;     // level 0
  std::size_t bad_children = 0;
  std::size_t children = 0;
};

struct GoodBadMap {
  int level = 0;
  std::map<Site, BoxStatus> boxes;

  bool contains(const Site& index) const { return boxes.count(index) > 0; }
  /// Throws InvalidArgument when the box was not classified.
  bool good(const Site& index) const;
};

struct ClassifyOptions {
  MethodSpec method;
  std::size_t max_starts = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

GoodBadMap classify_level0(const Environment& env, const BoxLattice& lat, const std::vector<Site>& indices,
                           const ClassifyOptions& opt);

/// Level k >= 1 from the level k-1 map, which must cover every sub-box.
GoodBadMap classify_level(const BoxLattice& lat, int k, const std::vector<Site>& indices, const GoodBadMap& lower);

/// Maps for levels 0..k covering everything the requested level-k boxes depend on.
std::vector<GoodBadMap> classify_boxes(const Environment& env, const BoxLattice& lat, int k,
                                       const std::vector<Site>& indices, const ClassifyOptions& opt);

/// Lattice region containing every level-0 box that level-k box `index` depends on.
Region dependence_region(const BoxLattice& lat, int k, const Site& index);

struct BadProbabilityConfig {
  PolyLadderConfig ladder;
  Site l{1, 0, 0, 0};
  EnsembleSpec ensemble;
  int level = 1;
  std::size_t m_env = 50;
  double J = -1.0;  // reference N0^-(J - 3(d+1)) when positive
  double conf = 0.95;
  ClassifyOptions classify;
  std::uint64_t seed = 0;
  int threads = 1;
};

ConditionReport estimate_bad_probability(const BadProbabilityConfig& cfg);

struct GoodBoxBoundConfig {
  Site l{1, 0, 0, 0};
  int level = 0;
  std::size_t n_walks = 10000;
  std::size_t max_starts = 200;
  ClassifyOptions classify;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Requires the level-k box at the origin to be good.
ConditionReport quenched_goodbox_bound_check(const Environment& env, const ScaleLadderPoly& ladder,
                                             const GoodBoxBoundConfig& cfg);

}  // namespace rwre
