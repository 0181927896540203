#pragma once

#include <vector>

#include "rwre/core.hpp"

namespace rwre {

/// Integer direction l = h * ell with ell a unit vector.
struct DirectionSpec {
  int d = 2;
  Site l_int{};
  Vec ell{};
  double h = 0.0;
  std::int64_t l1_norm = 0;
  double nu_l = 0.0;  // |l|_1 / |l|_2

  static DirectionSpec from_integer(const Site& l, int d);
  static DirectionSpec axis(int axis, int d);
};

/// Orthogonal d x d matrix with R(e1) = ell. Column j is R(e_{j+1}).
class Rotation {
 public:
  Rotation() = default;
  static Rotation identity(int d);

  int dim() const { return d_; }
  const Vec& column(int j) const { return cols_[j]; }
  const Vec& image_e1() const { return cols_[0]; }
  double entry(int row, int col) const { return cols_[col][row]; }
  bool is_identity() const;

  /// Coordinates of x in the rotated frame: (x . R(e_j))_j.
  Vec to_local(const Vec& x) const;
  Vec from_local(const Vec& y) const;

 private:
  friend Rotation make_rotation(const Site& l_int, int d);
  int d_ = 0;
  std::array<Vec, kMaxDim> cols_{};
};

/// Householder reflection mapping e1 onto l/|l|_2; identity when l is along +e1.
Rotation make_rotation(const Site& l_int, int d);

enum class SiteClass { interior, frontal, other_boundary, exterior };

const char* to_string(SiteClass c);

struct AxisRange {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double y) const {
    return (lo_closed ? y >= lo : y > lo) && (hi_closed ? y <= hi : y < hi);
  }
};

/// Rotated rectangular box {x : R^T x - origin in ranges[0] x ... x ranges[d-1]}.
/// The frontal boundary is the part of the outer 1-boundary with
/// y_0 >= ranges[0].hi and every transverse coordinate strictly inside its range.
class BoxSpec {
 public:
  BoxSpec() = default;

  /// Box anchor + R((-L, L_front) x (-L_tilde, L_tilde)^{d-1}); extents must exceed 3 sqrt(d).
  static BoxSpec from_extents(const Rotation& r, double L, double L_front, double L_tilde,
                              const Site& anchor);
  /// Arbitrary ranges in the rotated frame, with origin given in rotated coordinates.
  static BoxSpec from_ranges(const Rotation& r, const Vec& origin_local,
                             const std::vector<AxisRange>& ranges);

  int dim() const { return rotation_.dim(); }
  const Rotation& rotation() const { return rotation_; }
  const AxisRange& range(int j) const { return ranges_[j]; }
  const Vec& origin_local() const { return origin_; }

  Vec local(const Site& x) const;
  bool contains(const Site& x) const;
  SiteClass classify(const Site& x) const;
  /// True when x is a frontal point given it is known to be on the boundary.
  bool frontal_if_boundary(const Site& x) const;

  /// Lattice bounding box of the box (inclusive), used for enumeration.
  std::pair<Site, Site> bounding_box() const;
  std::vector<Site> interior_sites() const;

 private:
  Rotation rotation_;
  Vec origin_{};
  std::array<AxisRange, kMaxDim> ranges_{};
};

SiteClass classify_site(const BoxSpec& box, const Site& x);

/// Shape of the elongated boxes used by the polynomial condition and its ladder:
/// B~1 = [0,N] x [0,N^e]^{d-1}, B2 adds margins N/front_div and N^e/trans_div.
struct PolyBoxShape {
  double front_divisor = 11.0;
  double transverse_divisor = 10.0;
  double transverse_exponent = 3.0;

  static PolyBoxShape paper() { return {}; }
  static PolyBoxShape mini() { return {3.0, 2.0, 1.0}; }
};

/// Closed box R(z + [0,N] x [0,N^e]^{d-1}); z is given in rotated coordinates.
BoxSpec poly_box_tilde1(const Rotation& r, const Vec& z, double N, const PolyBoxShape& shape);
/// Open box R(z + (0,N) x (0,N^e)^{d-1}).
BoxSpec poly_box_dot1(const Rotation& r, const Vec& z, double N, const PolyBoxShape& shape);
/// Open box R(z + (-N/a, N + N/a) x (-N^e/b, N^e + N^e/b)^{d-1}).
BoxSpec poly_box_2(const Rotation& r, const Vec& z, double N, const PolyBoxShape& shape);

struct ConeSpec {
  Site apex{};
  DirectionSpec l;
  double zeta = 0.05;
};

/// (y - apex) . l >= zeta |l|_2 |y - apex|_2.
bool cone_contains(const ConeSpec& c, const Site& y);

/// 0.9 * min{1/(9d), 1/(3 d r), cos(pi/2 - arctan(3 r))}.
double default_zeta(double r_const, int d);

/// Unique i with z . ell in [i L0 - L0/2, i L0 + L0/2).
std::int64_t slab_index(const Site& z, const Vec& ell, double L0);

/// Membership of y in the thin slab around the hyperplane z . ell = i L0: some
/// nearest neighbour of y lies on the other side of (or on) the hyperplane.
bool in_thin_slab(const Site& y, const Vec& ell, double L0, std::int64_t i, int d);

}  // namespace rwre
