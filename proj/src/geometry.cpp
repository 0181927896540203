#include "rwre/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace rwre {

std::string to_string(const Site& s, int d) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < d; ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

DirectionSpec DirectionSpec::from_integer(const Site& l, int d) {
  check_dim(d);
  for (int i = d; i < kMaxDim; ++i) require(l[i] == 0, "direction has coordinates beyond dimension");
  if (norm1(l) == 0) throw InvalidArgument("invalid direction: zero vector");
  DirectionSpec s;
  s.d = d;
  s.l_int = l;
  s.h = norm2(l);
  for (int i = 0; i < kMaxDim; ++i) s.ell[i] = static_cast<double>(l[i]) / s.h;
  s.l1_norm = norm1(l);
  s.nu_l = static_cast<double>(s.l1_norm) / s.h;
  return s;
}

DirectionSpec DirectionSpec::axis(int axis, int d) {
  Site l{};
  l[axis] = 1;
  return from_integer(l, d);
}

Rotation Rotation::identity(int d) {
  check_dim(d);
  Rotation r;
  r.d_ = d;
  for (int j = 0; j < d; ++j) r.cols_[j][j] = 1.0;
  return r;
}

bool Rotation::is_identity() const {
  for (int j = 0; j < d_; ++j)
    for (int i = 0; i < d_; ++i)
      if (cols_[j][i] != (i == j ? 1.0 : 0.0)) return false;
  return true;
}

Vec Rotation::to_local(const Vec& x) const {
  Vec y{};
  for (int j = 0; j < d_; ++j) y[j] = dot(x, cols_[j]);
  return y;
}

Vec Rotation::from_local(const Vec& y) const {
  Vec x{};
  for (int j = 0; j < d_; ++j)
    for (int i = 0; i < d_; ++i) x[i] += cols_[j][i] * y[j];
  return x;
}

Rotation make_rotation(const Site& l_int, int d) {
  const auto dir = DirectionSpec::from_integer(l_int, d);
  Rotation r = Rotation::identity(d);
  // w = e1 - ell; H = I - 2 w w^T / |w|^2 swaps e1 and ell.
  Vec w{};
  for (int i = 0; i < d; ++i) w[i] = (i == 0 ? 1.0 : 0.0) - dir.ell[i];
  const double ww = dot(w, w);
  if (ww < 1e-30) return r;
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) {
      r.cols_[j][i] = (i == j ? 1.0 : 0.0) - 2.0 * w[i] * w[j] / ww;
    }
  }
  // Pin the first column exactly to ell.
  r.cols_[0] = dir.ell;
  return r;
}

const char* to_string(SiteClass c) {
  switch (c) {
    case SiteClass::interior: return "interior";
    case SiteClass::frontal: return "frontal";
    case SiteClass::other_boundary: return "other_boundary";
    case SiteClass::exterior: return "exterior";
  }
  return "?";
}

BoxSpec BoxSpec::from_extents(const Rotation& r, double L, double L_front, double L_tilde,
                              const Site& anchor) {
  const int d = r.dim();
  check_dim(d);
  const double floor_extent = 3.0 * std::sqrt(static_cast<double>(d));
  if (!(L > floor_extent && L_front > floor_extent && L_tilde > floor_extent)) {
    throw InvalidArgument("box extents must exceed 3*sqrt(d)");
  }
  std::vector<AxisRange> ranges;
  ranges.push_back({-L, L_front, false, false});
  for (int j = 1; j < d; ++j) ranges.push_back({-L_tilde, L_tilde, false, false});
  return from_ranges(r, r.to_local(to_vec(anchor)), ranges);
}

BoxSpec BoxSpec::from_ranges(const Rotation& r, const Vec& origin_local,
                             const std::vector<AxisRange>& ranges) {
  require(static_cast<int>(ranges.size()) == r.dim(), "box ranges must match dimension");
  BoxSpec b;
  b.rotation_ = r;
  b.origin_ = origin_local;
  for (int j = 0; j < r.dim(); ++j) {
    require(ranges[j].lo < ranges[j].hi, "box range must be non-empty");
    b.ranges_[j] = ranges[j];
  }
  return b;
}

Vec BoxSpec::local(const Site& x) const {
  Vec y = rotation_.to_local(to_vec(x));
  for (int j = 0; j < dim(); ++j) y[j] -= origin_[j];
  return y;
}

bool BoxSpec::contains(const Site& x) const {
  const Vec y = local(x);
  for (int j = 0; j < dim(); ++j)
    if (!ranges_[j].contains(y[j])) return false;
  return true;
}

bool BoxSpec::frontal_if_boundary(const Site& x) const {
  const Vec y = local(x);
  if (!(y[0] >= ranges_[0].hi)) return false;
  for (int j = 1; j < dim(); ++j)
    if (!(y[j] > ranges_[j].lo && y[j] < ranges_[j].hi)) return false;
  return true;
}

SiteClass BoxSpec::classify(const Site& x) const {
  if (contains(x)) return SiteClass::interior;
  bool adjacent = false;
  for (int k = 0; k < 2 * dim() && !adjacent; ++k) adjacent = contains(step(x, k));
  if (!adjacent) return SiteClass::exterior;
  return frontal_if_boundary(x) ? SiteClass::frontal : SiteClass::other_boundary;
}

std::pair<Site, Site> BoxSpec::bounding_box() const {
  const int d = dim();
  Site lo{};
  Site hi{};
  for (int i = 0; i < d; ++i) {
    lo[i] = std::numeric_limits<std::int64_t>::max();
    hi[i] = std::numeric_limits<std::int64_t>::min();
  }
  for (int mask = 0; mask < (1 << d); ++mask) {
    Vec y{};
    for (int j = 0; j < d; ++j) y[j] = origin_[j] + ((mask >> j) & 1 ? ranges_[j].hi : ranges_[j].lo);
    const Vec x = rotation_.from_local(y);
    for (int i = 0; i < d; ++i) {
      lo[i] = std::min<std::int64_t>(lo[i], static_cast<std::int64_t>(std::floor(x[i] - 1e-9)));
      hi[i] = std::max<std::int64_t>(hi[i], static_cast<std::int64_t>(std::ceil(x[i] + 1e-9)));
    }
  }
  return {lo, hi};
}

std::vector<Site> BoxSpec::interior_sites() const {
  const int d = dim();
  auto [lo, hi] = bounding_box();
  std::vector<Site> out;
  Site x = lo;
  for (;;) {
    if (contains(x)) out.push_back(x);
    int i = d - 1;
    while (i >= 0 && x[i] == hi[i]) {
      x[i] = lo[i];
      --i;
    }
    if (i < 0) break;
    ++x[i];
  }
  return out;
}

namespace {

BoxSpec poly_box(const Rotation& r, const Vec& z, double N, const PolyBoxShape& shape, bool closed, double front_margin,
                 double trans_margin) {
  require(N > 0, "box scale must be positive");
  const double T = std::pow(N, shape.transverse_exponent);
  std::vector<AxisRange> ranges;
  ranges.push_back({-front_margin, N + front_margin, closed, closed});
  for (int j = 1; j < r.dim(); ++j) ranges.push_back({-trans_margin * T, T + trans_margin * T, closed, closed});
  return BoxSpec::from_ranges(r, z, ranges);
}

}  // namespace

BoxSpec poly_box_tilde1(const Rotation& r, const Vec& z, double N, const PolyBoxShape& shape) {
  return poly_box(r, z, N, shape, true, 0.0, 0.0);
}

BoxSpec poly_box_dot1(const Rotation& r, const Vec& z, double N, const PolyBoxShape& shape) {
  return poly_box(r, z, N, shape, false, 0.0, 0.0);
}

BoxSpec poly_box_2(const Rotation& r, const Vec& z, double N, const PolyBoxShape& shape) {
  require(shape.front_divisor > 0 && shape.transverse_divisor > 0, "box margins must be positive");
  return poly_box(r, z, N, shape, false, N / shape.front_divisor, 1.0 / shape.transverse_divisor);
}

SiteClass classify_site(const BoxSpec& box, const Site& x) { return box.classify(x); }

bool cone_contains(const ConeSpec& c, const Site& y) {
  const Site diff = y - c.apex;
  const double lhs = static_cast<double>(dot(diff, c.l.l_int));
  const double rhs = c.zeta * c.l.h * norm2(diff);
  return lhs >= rhs;
}

double default_zeta(double r_const, int d) {
  if (!(r_const > 0.0)) throw InvalidArgument("default_zeta: r_const must be positive");
  check_dim(d);
  const double dd = static_cast<double>(d);
  const double a = 1.0 / (9.0 * dd);
  const double b = 1.0 / (3.0 * dd * r_const);
  const double c = std::cos(std::numbers::pi / 2.0 - std::atan(3.0 * r_const));
  return 0.9 * std::min({a, b, c});
}

std::int64_t slab_index(const Site& z, const Vec& ell, double L0) {
  return static_cast<std::int64_t>(std::floor((dot(z, ell) + L0 / 2.0) / L0));
}

bool in_thin_slab(const Site& y, const Vec& ell, double L0, std::int64_t i, int d) {
  const double level = static_cast<double>(i) * L0;
  const double fy = dot(y, ell) - level;
  for (int k = 0; k < 2 * d; ++k) {
    const double fx = dot(step(y, k), ell) - level;
    if (fx * fy <= 0.0) return true;
  }
  return false;
}

}  // namespace rwre
