#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace rwre {

// Sites and vectors are zero-padded to kMaxDim so that dot products and norms
// never need the dimension.
inline constexpr int kMaxDim = 4;
inline constexpr int kMaxDirs = 2 * kMaxDim;

using Site = std::array<std::int64_t, kMaxDim>;
using Vec = std::array<double, kMaxDim>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class RegionExhausted : public Error {
 public:
  using Error::Error;
};

class CapacityExceeded : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

inline void check_dim(int d) {
  if (d < 2 || d > kMaxDim) {
    throw InvalidArgument("dimension must be in [2, " + std::to_string(kMaxDim) + "], got " +
                          std::to_string(d));
  }
}

// Direction index k in [0, 2d): axis k/2, positive when k is even. The
// ordering (e1, -e1, e2, -e2, ...) is the on-disk order of transition entries.
constexpr int dir_axis(int k) { return k / 2; }
constexpr int dir_sign(int k) { return (k % 2 == 0) ? 1 : -1; }
constexpr int dir_index(int axis, int sign) { return 2 * axis + (sign > 0 ? 0 : 1); }

inline Site unit_site(int k) {
  Site s{};
  s[dir_axis(k)] = dir_sign(k);
  return s;
}

inline Site operator+(Site a, const Site& b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] += b[i];
  return a;
}

inline Site operator-(Site a, const Site& b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] -= b[i];
  return a;
}

inline Site step(Site a, int k) {
  a[dir_axis(k)] += dir_sign(k);
  return a;
}

inline Vec to_vec(const Site& s) {
  Vec v{};
  for (int i = 0; i < kMaxDim; ++i) v[i] = static_cast<double>(s[i]);
  return v;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (int i = 0; i < kMaxDim; ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const Site& a, const Vec& b) {
  double s = 0.0;
  for (int i = 0; i < kMaxDim; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline std::int64_t dot(const Site& a, const Site& b) {
  std::int64_t s = 0;
  for (int i = 0; i < kMaxDim; ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }
inline double norm2(const Site& a) { return std::sqrt(static_cast<double>(dot(a, a))); }

inline std::int64_t norm1(const Site& a) {
  std::int64_t s = 0;
  for (auto c : a) s += c < 0 ? -c : c;
  return s;
}

inline Site make_site(std::initializer_list<std::int64_t> xs) {
  Site s{};
  int i = 0;
  for (auto x : xs) {
    if (i >= kMaxDim) throw InvalidArgument("too many coordinates");
    s[i++] = x;
  }
  return s;
}

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v{};
  int i = 0;
  for (auto x : xs) {
    if (i >= kMaxDim) throw InvalidArgument("too many coordinates");
    v[i++] = x;
  }
  return v;
}

std::string to_string(const Site& s, int d);

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (auto c : s) {
      h ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace rwre
