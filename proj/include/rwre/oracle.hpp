#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"
#include "rwre/walk.hpp"

namespace rwre {

inline constexpr std::size_t kDefaultStateCap = 100000;

/// Killed chain on a finite set of interior sites. Sites where one of the stop
/// conditions holds are absorbing; their class is the index of the first such
/// condition in list order.
struct AbsorptionProblem {
  int d = 2;
  Site start{};
  std::vector<Site> interior;
  std::vector<Site> boundary;
  std::vector<int> boundary_class;
  std::vector<std::string> class_names;
  /// Transverse coordinates were collapsed (translation-invariant environment
  /// with axis-aligned level stops); sites then carry only the stop axis.
  bool quotient = false;

  std::vector<std::vector<std::pair<int, double>>> to_interior;
  std::vector<std::vector<std::pair<int, double>>> to_boundary;
  std::unordered_map<Site, int, SiteHash> interior_index;
  std::unordered_map<Site, int, SiteHash> boundary_index;

  int interior_id(const Site& x) const;
  int boundary_id(const Site& x) const;
  int class_id(const std::string& name) const;
  std::size_t states() const { return interior.size(); }
};

/// Breadth-first reachability from start; stops must be spatial (no horizon).
AbsorptionProblem make_problem(const Environment& env, const Site& start, const std::vector<StopCondition>& stops,
                               std::size_t cap = kDefaultStateCap);
/// Exit problem of a box from start with classes {frontal, other_boundary}.
AbsorptionProblem make_box_problem(const Environment& env, const BoxSpec& box, const Site& start,
                                   std::size_t cap = kDefaultStateCap);
/// Same classes, but with every interior site of the box as a state (no start).
AbsorptionProblem make_box_problem_all(const Environment& env, const BoxSpec& box,
                                       std::size_t cap = kDefaultStateCap);
/// Slab c_down < x . u < c_up with classes {up, down}.
AbsorptionProblem make_slab_problem(const Environment& env, const Vec& u, double c_down, double c_up,
                                    const Site& start, std::size_t cap = kDefaultStateCap);

struct ExitDistribution {
  std::vector<double> site_probability;   // aligned with problem.boundary
  std::vector<double> class_probability;  // aligned with problem.class_names
  std::vector<std::string> class_names;
  double residual = 0.0;

  double of(const std::string& class_name) const;
};

/// Factorised I - Q; solves can be repeated for many right-hand sides.
class AbsorptionSolver {
 public:
  explicit AbsorptionSolver(const AbsorptionProblem& p);
  ~AbsorptionSolver();
  AbsorptionSolver(AbsorptionSolver&&) noexcept;

  /// P_x[exit in class c] for every interior state x.
  std::vector<double> class_probabilities(int class_id) const;
  /// Exit distribution from the problem's start site.
  ExitDistribution from_start() const;

 private:
  struct Impl;
  const AbsorptionProblem* problem_;
  std::unique_ptr<Impl> impl_;
};

ExitDistribution exit_distribution_exact(const AbsorptionProblem& p);

/// Probability that the lazy walk with up/down probabilities p_up, p_down hits
/// +a before -b: (1 - r^b) / (1 - r^{a+b}) with r = p_down / p_up.
double lazy_gr_oracle(double p_up, double p_down, std::int64_t a, std::int64_t b);

struct PathLaws {
  std::map<std::vector<std::uint8_t>, double> coupled;
  std::map<std::vector<std::uint8_t>, double> quenched;
  double total_variation = 0.0;
};

/// Exact path laws of the first n steps under the coupled and the direct construction.
PathLaws coupled_law_exact(const Environment& env, const Site& x0, int n);

}  // namespace rwre
