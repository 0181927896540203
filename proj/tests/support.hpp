#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <unordered_map>

#include "rwre/environment.hpp"
#include "rwre/geometry.hpp"

namespace rwre::testing {

inline TransitionVector probs2(double e1, double me1, double e2, double me2) {
  TransitionVector p{};
  p[0] = e1;
  p[1] = me1;
  p[2] = e2;
  p[3] = me2;
  return p;
}

inline Environment drifted_constant() { return Environment::constant(2, 0.05, probs2(0.7, 0.1, 0.1, 0.1)); }
inline Environment mild_constant() { return Environment::constant(2, 0.05, probs2(0.4, 0.1, 0.25, 0.25)); }

/// Box (-L, L_front) x (-L_tilde, L_tilde)^{d-1} without the extent floor of from_extents.
inline BoxSpec raw_box(const Rotation& r, double L, double L_front, double L_tilde) {
  std::vector<AxisRange> ranges{{-L, L_front, false, false}};
  for (int j = 1; j < r.dim(); ++j) ranges.push_back({-L_tilde, L_tilde, false, false});
  return BoxSpec::from_ranges(r, Vec{}, ranges);
}

// Independent dense solve of the frontal exit probability from every interior site.
inline std::unordered_map<Site, double, SiteHash> dense_frontal_all(const Environment& env, const BoxSpec& box) {
  const auto sites = box.interior_sites();
  std::unordered_map<Site, int, SiteHash> id;
  for (std::size_t i = 0; i < sites.size(); ++i) id[sites[i]] = static_cast<int>(i);
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = env.at(sites[static_cast<std::size_t>(i)]);
    for (int k = 0; k < 2 * env.dim(); ++k) {
      const Site y = step(sites[static_cast<std::size_t>(i)], k);
      const auto it = id.find(y);
      if (it != id.end()) {
        a(i, it->second) -= p[k];
      } else if (box.classify(y) == SiteClass::frontal) {
        rhs(i) += p[k];
      }
    }
  }
  const Eigen::VectorXd h = a.fullPivLu().solve(rhs);
  std::unordered_map<Site, double, SiteHash> out;
  for (const auto& [x, i] : id) out[x] = h(i);
  return out;
}

inline double dense_frontal(const Environment& env, const BoxSpec& box, const Site& start) {
  return dense_frontal_all(env, box).at(start);
}

inline double three_sigma(double p, double n) { return 3.0 * std::sqrt(std::max(p * (1.0 - p), 1e-12) / n); }

}  // namespace rwre::testing
