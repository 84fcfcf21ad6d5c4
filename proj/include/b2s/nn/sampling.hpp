#pragma once

// Differentiable interpolation over 2D maps and 3D volumes, the deformable
// attention sampling core, and depth-weighted splatting.
//
// Maps are stored as [cells, C] with cells in row-major order over `dims`
// (for volumes this is the shared voxel linear index). A normalized coordinate
// u on an axis of size S maps to the continuous cell position x = u*S - 0.5,
// so u = (i + 0.5)/S lands exactly on cell i. Positions outside [0, S-1] are
// clamped to the border and carry no coordinate gradient.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "b2s/nn/ops.hpp"

namespace b2s::nn {

namespace detail {

struct Corners {
  int n = 0;                            // 2^d
  std::array<std::size_t, 8> cell{};    // row of each corner
  std::array<double, 8> w{};            // interpolation weight
  std::array<std::array<double, 3>, 8> dw{};  // d weight / d normalized coord
};

inline Corners corners_of(const std::vector<std::size_t>& dims, const double* u) {
  const auto d = dims.size();
  std::array<std::size_t, 3> i0{}, i1{};
  std::array<double, 3> f{}, dfdu{};
  for (std::size_t a = 0; a < d; ++a) {
    const auto s = static_cast<double>(dims[a]);
    double x = u[a] * s - 0.5;
    bool clamped = false;
    if (!(x >= 0.0)) {
      x = 0.0;
      clamped = true;
    } else if (x > s - 1.0) {
      x = s - 1.0;
      clamped = true;
    }
    if (dims[a] == 1) {
      i0[a] = i1[a] = 0;
      f[a] = 0.0;
      dfdu[a] = 0.0;
      continue;
    }
    auto lo = static_cast<std::size_t>(std::floor(x));
    if (lo > dims[a] - 2) lo = dims[a] - 2;
    i0[a] = lo;
    i1[a] = lo + 1;
    f[a] = x - static_cast<double>(lo);
    dfdu[a] = clamped ? 0.0 : s;
  }
  Corners c;
  c.n = 1 << d;
  for (int k = 0; k < c.n; ++k) {
    std::size_t cell = 0;
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool hi = (k >> (d - 1 - a)) & 1;
      cell = cell * dims[a] + (hi ? i1[a] : i0[a]);
      w *= hi ? f[a] : 1.0 - f[a];
    }
    c.cell[k] = cell;
    c.w[k] = w;
    for (std::size_t a = 0; a < d; ++a) {
      double p = dfdu[a] * (((k >> (d - 1 - a)) & 1) ? 1.0 : -1.0);
      for (std::size_t b = 0; b < d; ++b) {
        if (b == a) continue;
        p *= ((k >> (d - 1 - b)) & 1) ? f[b] : 1.0 - f[b];
      }
      c.dw[k][a] = p;
    }
  }
  return c;
}

inline void check_map(const Tensor& map, const std::vector<std::size_t>& dims, const char* op) {
  require(dims.size() == 2 || dims.size() == 3, ErrorKind::shape_mismatch,
          std::string(op) + ": map must be 2D or 3D");
  require(map.rank() == 2 && map.dim(0) == numel_of(dims), ErrorKind::shape_mismatch,
          std::string(op) + ": map rows " + shape_str(map.shape()) + " vs dims " + shape_str(dims));
}

}  // namespace detail

/// Bilinear (2 axes) or trilinear (3 axes) sampling of `map` [cells, C] at
/// normalized coordinates `coords` [N, d]. Returns [N, C].
inline Tensor sample_grid(const Tensor& map, std::vector<std::size_t> dims, const Tensor& coords) {
  detail::check_map(map, dims, "sample_grid");
  const auto d = dims.size();
  require(coords.rank() == 2 && coords.dim(1) == d, ErrorKind::shape_mismatch,
          "sample_grid: coords " + shape_str(coords.shape()));
  const auto n = coords.dim(0), c = map.dim(1);
  std::vector<detail::Corners> cs(n);
  std::vector<double> out(n * c, 0.0);
  const auto mv = map.values(), uv = coords.values();
  for (std::size_t q = 0; q < n; ++q) {
    cs[q] = detail::corners_of(dims, uv.data() + q * d);
    for (int k = 0; k < cs[q].n; ++k) {
      const double w = cs[q].w[k];
      const double* src = mv.data() + cs[q].cell[k] * c;
      for (std::size_t j = 0; j < c; ++j) out[q * c + j] += w * src[j];
    }
  }
  return detail::make_result({n, c}, std::move(out), {map, coords}, [cs = std::move(cs), c, d](Node& self) {
    const auto& mv = detail::val(self, 0);
    double* gm = detail::grad_of(self, 0);
    double* gu = detail::grad_of(self, 1);
    for (std::size_t q = 0; q < cs.size(); ++q) {
      const double* g = self.grad.data() + q * c;
      for (int k = 0; k < cs[q].n; ++k) {
        const auto cell = cs[q].cell[k];
        if (gm)
          for (std::size_t j = 0; j < c; ++j) gm[cell * c + j] += cs[q].w[k] * g[j];
        if (gu) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[j] * mv[cell * c + j];
          for (std::size_t a = 0; a < d; ++a) gu[q * d + a] += cs[q].dw[k][a] * dot;
        }
      }
    }
  });
}

/// Multi-head deformable sampling core.
///
///   value   [cells, heads*ch]     map, head h owns channels [h*ch, (h+1)*ch)
///   offsets [N, heads*points*d]   offsets in cell units along each axis
///   weights [N, heads*points]     attention weights (already normalized)
///   ref     N*d normalized reference points (constant)
///
/// out[q, h*ch + j] = sum_p weights[q,h,p] * sample_h(ref_q + offsets[q,h,p] / dims)[j]
inline Tensor deform_sample(const Tensor& value, std::vector<std::size_t> dims, const Tensor& offsets,
                            const Tensor& weights, const std::vector<double>& ref, std::size_t heads,
                            std::size_t points) {
  detail::check_map(value, dims, "deform_sample");
  const auto d = dims.size();
  const auto n = weights.dim(0);
  require(heads > 0 && value.dim(1) % heads == 0, ErrorKind::shape_mismatch,
          "deform_sample: channels not divisible by heads");
  require(weights.rank() == 2 && weights.dim(1) == heads * points, ErrorKind::shape_mismatch,
          "deform_sample: weights " + shape_str(weights.shape()));
  require(offsets.rank() == 2 && offsets.dim(0) == n && offsets.dim(1) == heads * points * d,
          ErrorKind::shape_mismatch, "deform_sample: offsets " + shape_str(offsets.shape()));
  require(ref.size() == n * d, ErrorKind::shape_mismatch, "deform_sample: reference point count");
  const auto cv = value.dim(1), ch = cv / heads;
  const auto hp = heads * points;
  // only the sample locations are kept; corners are recomputed in backward
  std::vector<double> locs(n * hp * d);
  std::vector<double> out(n * cv, 0.0);
  const auto vv = value.values(), ov = offsets.values(), wv = weights.values();
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t p = 0; p < points; ++p) {
        const auto s = q * hp + h * points + p;
        double* loc = locs.data() + s * d;
        for (std::size_t a = 0; a < d; ++a)
          loc[a] = ref[q * d + a] + ov[s * d + a] / static_cast<double>(dims[a]);
        const auto c = detail::corners_of(dims, loc);
        const double aw = wv[s];
        double* o = out.data() + q * cv + h * ch;
        for (int k = 0; k < c.n; ++k) {
          const double w = aw * c.w[k];
          if (w == 0.0) continue;
          const double* src = vv.data() + c.cell[k] * cv + h * ch;
          for (std::size_t j = 0; j < ch; ++j) o[j] += w * src[j];
        }
      }
  return detail::make_result(
      {n, cv}, std::move(out), {value, offsets, weights},
      [locs = std::move(locs), dims, n, heads, points, d, cv, ch](Node& self) {
        const auto& vv = detail::val(self, 0);
        const auto& wv = detail::val(self, 2);
        double* gv = detail::grad_of(self, 0);
        double* go = detail::grad_of(self, 1);
        double* gw = detail::grad_of(self, 2);
        const auto hp = heads * points;
        for (std::size_t q = 0; q < n; ++q)
          for (std::size_t h = 0; h < heads; ++h) {
            const double* g = self.grad.data() + q * cv + h * ch;
            for (std::size_t p = 0; p < points; ++p) {
              const auto s = q * hp + h * points + p;
              const auto c = detail::corners_of(dims, locs.data() + s * d);
              const double aw = wv[s];
              for (int k = 0; k < c.n; ++k) {
                const double* src = vv.data() + c.cell[k] * cv + h * ch;
                double dot = 0.0;
                for (std::size_t j = 0; j < ch; ++j) dot += g[j] * src[j];
                if (gw) gw[s] += c.w[k] * dot;
                if (go)
                  for (std::size_t a = 0; a < d; ++a)
                    go[s * d + a] += aw * c.dw[k][a] * dot / static_cast<double>(dims[a]);
                if (gv) {
                  double* dst = gv + c.cell[k] * cv + h * ch;
                  const double w = aw * c.w[k];
                  for (std::size_t j = 0; j < ch; ++j) dst[j] += w * g[j];
                }
              }
            }
          }
      });
}

/// Depth-weighted splat: out[target[p*D + d], :] += probs[p, d] * ctx[p, :].
/// Targets equal to `n_cells` or above are dropped (out of grid).
inline Tensor splat(const Tensor& probs, const Tensor& ctx, std::vector<std::uint32_t> target,
                    std::size_t n_cells) {
  require(probs.rank() == 2 && ctx.rank() == 2 && probs.dim(0) == ctx.dim(0), ErrorKind::shape_mismatch,
          "splat: probs " + shape_str(probs.shape()) + " ctx " + shape_str(ctx.shape()));
  const auto np = probs.dim(0), nd = probs.dim(1), c = ctx.dim(1);
  require(target.size() == np * nd, ErrorKind::shape_mismatch, "splat: target count");
  std::vector<double> out(n_cells * c, 0.0);
  const auto pv = probs.values(), cv = ctx.values();
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t k = 0; k < nd; ++k) {
      const auto t = target[p * nd + k];
      if (t >= n_cells) continue;
      const double w = pv[p * nd + k];
      for (std::size_t j = 0; j < c; ++j) out[t * c + j] += w * cv[p * c + j];
    }
  return detail::make_result({n_cells, c}, std::move(out), {probs, ctx},
                             [target = std::move(target), np, nd, c, n_cells](Node& self) {
    const auto& pv = detail::val(self, 0);
    const auto& cv = detail::val(self, 1);
    double* gp = detail::grad_of(self, 0);
    double* gc = detail::grad_of(self, 1);
    for (std::size_t p = 0; p < np; ++p)
      for (std::size_t k = 0; k < nd; ++k) {
        const auto t = target[p * nd + k];
        if (t >= n_cells) continue;
        const double* g = self.grad.data() + t * c;
        if (gp) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[j] * cv[p * c + j];
          gp[p * nd + k] += dot;
        }
        if (gc) {
          const double w = pv[p * nd + k];
          for (std::size_t j = 0; j < c; ++j) gc[p * c + j] += w * g[j];
        }
      }
  });
}

/// Multiplies row r of x by s[r].
inline Tensor scale_rows(const Tensor& x, std::vector<double> s) {
  require(x.rank() >= 1 && s.size() == x.dim(0), ErrorKind::shape_mismatch, "scale_rows: factor count");
  const auto c = x.numel() / std::max<std::size_t>(x.dim(0), 1);
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < s.size(); ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] *= s[r];
  return detail::make_result(x.shape(), std::move(out), {x}, [s = std::move(s), c](Node& self) {
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t r = 0; r < s.size(); ++r)
        for (std::size_t j = 0; j < c; ++j) g[r * c + j] += s[r] * self.grad[r * c + j];
  });
}

}  // namespace b2s::nn
