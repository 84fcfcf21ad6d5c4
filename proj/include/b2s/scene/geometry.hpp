#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "b2s/voxel/grid.hpp"

namespace b2s {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;  // row-major

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {dot(m[0], v), dot(m[1], v), dot(m[2], v)};
}
inline Vec3 mat_t_vec(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2], m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
          m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
}

inline Mat3 yaw_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

/// Rigid transform: p_parent = R * p_child + t.
struct Pose {
  Mat3 R{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 t{};

  Vec3 apply(const Vec3& p) const { return mat_vec(R, p) + t; }
  Vec3 apply_inverse(const Vec3& p) const { return mat_t_vec(R, p - t); }
  bool operator==(const Pose&) const = default;
};

/// Max deviation of R^T R from identity.
inline double orthonormality_error(const Mat3& r) {
  double e = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[k][i] * r[k][j];
      e = std::max(e, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return e;
}

/// Slab test. Returns the parametric interval [t0, t1] of o + t*d inside the
/// box, or nothing when the ray misses it.
inline std::optional<std::pair<double, double>> ray_box(const Vec3& o, const Vec3& d, const Vec3& lo,
                                                        const Vec3& hi) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::nullopt;
  return std::make_pair(t0, t1);
}

struct RayHit {
  double t = 0.0;        // ray parameter at entry of the hit voxel
  std::size_t voxel = 0;  // linear index
};

/// First voxel with occupied(i) along o + t*d, t in [0, t_max], walking the
/// grid with a 3D DDA. The hit parameter is the voxel's entry point (0 when
/// the origin itself is inside an occupied voxel).
template <class Occupied>
std::optional<RayHit> raycast(const GridSpec& spec, const Vec3& o, const Vec3& d, double t_max,
                              Occupied&& occupied) {
  const double s = spec.voxel_size;
  const Vec3 lo{spec.origin[0], spec.origin[1], spec.origin[2]};
  const auto hi_arr = spec.extent_max();
  const Vec3 hi{hi_arr[0], hi_arr[1], hi_arr[2]};
  const std::array<std::int64_t, 3> dims{spec.dims_h, spec.dims_w, spec.dims_z};

  const auto span = ray_box(o, d, lo, hi);
  if (!span || span->second < 0.0) return std::nullopt;
  double t = std::max(0.0, span->first);
  if (t > t_max) return std::nullopt;

  // Starting cell: evaluated slightly inside along the ray to avoid landing on
  // the boundary of the cell we are entering.
  std::array<std::int64_t, 3> cell{};
  const Vec3 p = o + t * d;
  for (int a = 0; a < 3; ++a) {
    auto c = static_cast<std::int64_t>(std::floor((p[a] - lo[a]) / s));
    if (d[a] < 0.0 && p[a] - lo[a] == static_cast<double>(c) * s) --c;
    cell[a] = std::clamp<std::int64_t>(c, 0, dims[a] - 1);
  }
  std::array<std::int64_t, 3> step{};
  Vec3 t_next{}, t_delta{};
  for (int a = 0; a < 3; ++a) {
    if (d[a] > 0.0) {
      step[a] = 1;
      t_next[a] = (lo[a] + static_cast<double>(cell[a] + 1) * s - o[a]) / d[a];
      t_delta[a] = s / d[a];
    } else if (d[a] < 0.0) {
      step[a] = -1;
      t_next[a] = (lo[a] + static_cast<double>(cell[a]) * s - o[a]) / d[a];
      t_delta[a] = -s / d[a];
    } else {
      step[a] = 0;
      t_next[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }
  auto index = [&] {
    return spec.index(static_cast<std::uint32_t>(cell[0]), static_cast<std::uint32_t>(cell[1]),
                      static_cast<std::uint32_t>(cell[2]));
  };
  while (true) {
    const auto i = index();
    if (occupied(i)) return RayHit{t, i};
    int a = 0;
    if (t_next[1] < t_next[a]) a = 1;
    if (t_next[2] < t_next[a]) a = 2;
    t = t_next[a];
    if (t > t_max) return std::nullopt;
    cell[a] += step[a];
    if (cell[a] < 0 || cell[a] >= dims[a]) return std::nullopt;
    t_next[a] += t_delta[a];
  }
}

}  // namespace b2s
