#pragma once

// Building blocks of the occupancy network: linear/norm parameter bundles,
// deformable attention (volume and camera variants) and the post-norm
// residual sub-blocks used by the dense and sparse transformer layers.

#include <string>
#include <vector>

#include "b2s/nn/ops.hpp"
#include "b2s/nn/params.hpp"
#include "b2s/nn/sampling.hpp"
#include "b2s/scene/camera.hpp"

namespace b2s::model {

using nn::Tensor;

struct Linear {
  Tensor w, b;

  static Linear make(nn::ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return {ps.add_uniform(name + ".w", {in, out}, in, rng), ps.add_constant(name + ".b", {out}, 0.0)};
  }
  static Linear zero(nn::ParamStore& ps, const std::string& name, std::size_t in, std::size_t out) {
    return {ps.add_constant(name + ".w", {in, out}, 0.0), ps.add_constant(name + ".b", {out}, 0.0)};
  }
  Tensor operator()(const Tensor& x) const { return nn::pointwise_linear(x, w, b); }
};

struct Norm {
  Tensor g, b;

  static Norm make(nn::ParamStore& ps, const std::string& name, std::size_t c) {
    return {ps.add_constant(name + ".g", {c}, 1.0), ps.add_constant(name + ".b", {c}, 0.0)};
  }
  Tensor operator()(const Tensor& x) const { return nn::layer_norm(x, g, b); }
};

/// Multi-head deformable attention parameters. Offsets start at zero so the
/// untrained module samples at the reference points. `value_in` is the width
/// of the attended map when it differs from the query width.
struct DeformAttn {
  Linear offset, weight, value, out;
  Norm norm;
  std::size_t heads = 1, points = 1, d = 2;

  static DeformAttn make(nn::ParamStore& ps, const std::string& name, std::size_t c, std::size_t heads,
                         std::size_t points, std::size_t d, Rng& rng, std::size_t value_in = 0) {
    DeformAttn a;
    a.offset = Linear::zero(ps, name + ".offset", c, heads * points * d);
    a.weight = Linear::make(ps, name + ".weight", c, heads * points, rng);
    a.value = Linear::make(ps, name + ".value", value_in ? value_in : c, c, rng);
    a.out = Linear::make(ps, name + ".out", c, c, rng);
    a.norm = Norm::make(ps, name + ".norm", c);
    a.heads = heads;
    a.points = points;
    a.d = d;
    return a;
  }

  /// Sampling offsets [N, heads*points*d] and per-head softmaxed weights [N, heads*points].
  std::pair<Tensor, Tensor> plan(const Tensor& query) const {
    const auto n = query.dim(0);
    auto w = nn::reshape(weight(query), {n * heads, points});
    w = nn::reshape(nn::softmax(w, 1), {n, heads * points});
    return {offset(query), w};
  }
};

/// x <- norm(x + out(deform(value(src), query))). `src` is a full volume with
/// `dims`; `query` has one row per row of `x` and `ref` holds their
/// normalized reference points.
inline Tensor attend_block(const Tensor& x, const Tensor& query, const Tensor& src, const DeformAttn& a,
                           const std::vector<std::size_t>& dims, const std::vector<double>& ref) {
  const auto [off, w] = a.plan(query);
  const auto s = nn::deform_sample(a.value(src), dims, off, w, ref, a.heads, a.points);
  return a.norm(nn::add(x, a.out(s)));
}

/// Which query rows project into which camera, with normalized (v, u)
/// reference points on the image plane.
struct ViewHits {
  std::vector<std::vector<std::size_t>> rows;  // per camera
  std::vector<std::vector<double>> ref;        // per camera, 2 per row
  std::vector<double> inv_count;               // per query: 1/#cameras or 0
  std::vector<std::size_t> hit_rows;           // queries seen by at least one camera
};

inline ViewHits project_queries(const CameraRig& rig, const std::vector<Vec3>& points) {
  ViewHits h;
  h.rows.resize(rig.size());
  h.ref.resize(rig.size());
  h.inv_count.assign(points.size(), 0.0);
  for (std::size_t q = 0; q < points.size(); ++q) {
    int count = 0;
    for (std::size_t c = 0; c < rig.size(); ++c) {
      const auto p = project_point(rig[c], points[q]);
      if (!p) continue;
      h.rows[c].push_back(q);
      h.ref[c].push_back(p->v / rig[c].height);
      h.ref[c].push_back(p->u / rig[c].width);
      ++count;
    }
    if (count > 0) {
      h.inv_count[q] = 1.0 / count;
      h.hit_rows.push_back(q);
    }
  }
  return h;
}

/// Restricts hits to a subset of query rows; `subset[k]` becomes row k.
inline ViewHits select_queries(const ViewHits& all, const std::vector<std::size_t>& subset) {
  std::vector<std::ptrdiff_t> remap(all.inv_count.size(), -1);
  for (std::size_t k = 0; k < subset.size(); ++k) remap[subset[k]] = static_cast<std::ptrdiff_t>(k);
  ViewHits h;
  h.rows.resize(all.rows.size());
  h.ref.resize(all.rows.size());
  h.inv_count.resize(subset.size());
  for (std::size_t k = 0; k < subset.size(); ++k) {
    h.inv_count[k] = all.inv_count[subset[k]];
    if (h.inv_count[k] > 0.0) h.hit_rows.push_back(k);
  }
  for (std::size_t c = 0; c < all.rows.size(); ++c)
    for (std::size_t i = 0; i < all.rows[c].size(); ++i) {
      const auto r = remap[all.rows[c][i]];
      if (r < 0) continue;
      h.rows[c].push_back(static_cast<std::size_t>(r));
      h.ref[c].push_back(all.ref[c][2 * i]);
      h.ref[c].push_back(all.ref[c][2 * i + 1]);
    }
  return h;
}

/// Camera cross-attention. `image` is [cameras * fh * fw, C], camera-major.
/// Each query averages the attended features over the cameras that see it;
/// rows seen by no camera pass through unchanged.
inline Tensor cross_block(const Tensor& x, const DeformAttn& a, const Tensor& image, std::size_t fh,
                          std::size_t fw, const ViewHits& hits) {
  if (hits.hit_rows.empty()) return x;
  const auto n = x.dim(0);
  const auto plane = fh * fw;
  const auto value = a.value(image);
  const auto [off, w] = a.plan(x);
  std::vector<Tensor> parts;
  for (std::size_t c = 0; c < hits.rows.size(); ++c) {
    const auto& rows = hits.rows[c];
    if (rows.empty()) continue;
    std::vector<std::size_t> cells(plane);
    for (std::size_t i = 0; i < plane; ++i) cells[i] = c * plane + i;
    const auto v = nn::gather_rows(value, std::move(cells));
    auto s = nn::deform_sample(v, {fh, fw}, nn::gather_rows(off, rows), nn::gather_rows(w, rows), hits.ref[c],
                               a.heads, a.points);
    std::vector<double> scale(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) scale[i] = hits.inv_count[rows[i]];
    parts.push_back(nn::scatter_rows(nn::scale_rows(s, std::move(scale)), rows, n));
  }
  auto acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = nn::add(acc, parts[i]);
  const auto hit = hits.hit_rows;
  const auto updated = a.norm(nn::add(nn::gather_rows(x, hit), nn::gather_rows(a.out(acc), hit)));
  return nn::row_merge(x, updated, hit);
}

struct Mlp {
  Linear fc1, fc2;
  Norm norm;

  static Mlp make(nn::ParamStore& ps, const std::string& name, std::size_t c, std::size_t hidden, Rng& rng) {
    return {Linear::make(ps, name + ".fc1", c, hidden, rng), Linear::make(ps, name + ".fc2", hidden, c, rng),
            Norm::make(ps, name + ".norm", c)};
  }
  Tensor operator()(const Tensor& x) const { return norm(nn::add(x, fc2(nn::relu(fc1(x))))); }
};

// ----------------------------------------------------------- volume geometry

/// Normalized centers of every cell of a volume, d = 3 values per cell.
inline std::vector<double> volume_refs(const std::array<std::uint32_t, 3>& dims) {
  std::vector<double> r;
  r.reserve(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * 3);
  for (std::uint32_t h = 0; h < dims[0]; ++h)
    for (std::uint32_t w = 0; w < dims[1]; ++w)
      for (std::uint32_t z = 0; z < dims[2]; ++z) {
        r.push_back((h + 0.5) / dims[0]);
        r.push_back((w + 0.5) / dims[1]);
        r.push_back((z + 0.5) / dims[2]);
      }
  return r;
}

inline std::vector<double> select_refs(const std::vector<double>& refs, const std::vector<std::size_t>& rows,
                                       std::size_t d = 3) {
  std::vector<double> r;
  r.reserve(rows.size() * d);
  for (auto i : rows)
    for (std::size_t a = 0; a < d; ++a) r.push_back(refs[i * d + a]);
  return r;
}

/// Ego-frame cell centers of a volume spanning the grid's box with `dims` cells.
inline std::vector<Vec3> volume_centers(const GridSpec& grid, const std::array<std::uint32_t, 3>& dims) {
  const std::array<double, 3> extent{grid.dims_h * static_cast<double>(grid.voxel_size),
                                     grid.dims_w * static_cast<double>(grid.voxel_size),
                                     grid.dims_z * static_cast<double>(grid.voxel_size)};
  std::vector<Vec3> c;
  c.reserve(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  for (std::uint32_t h = 0; h < dims[0]; ++h)
    for (std::uint32_t w = 0; w < dims[1]; ++w)
      for (std::uint32_t z = 0; z < dims[2]; ++z)
        c.push_back({grid.origin[0] + (h + 0.5) * extent[0] / dims[0], grid.origin[1] + (w + 0.5) * extent[1] / dims[1],
                     grid.origin[2] + (z + 0.5) * extent[2] / dims[2]});
  return c;
}

/// Cell of the `dims` volume containing an ego point, or the cell count when outside.
inline std::uint32_t volume_cell(const GridSpec& grid, const std::array<std::uint32_t, 3>& dims, const Vec3& p) {
  const auto total = static_cast<std::uint32_t>(dims[0] * dims[1] * dims[2]);
  std::array<std::uint32_t, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t full = a == 0 ? grid.dims_h : a == 1 ? grid.dims_w : grid.dims_z;
    const double cell = full * static_cast<double>(grid.voxel_size) / dims[a];
    const double f = std::floor((p[a] - grid.origin[a]) / cell);
    if (!(f >= 0.0 && f < dims[a])) return total;
    idx[a] = static_cast<std::uint32_t>(f);
  }
  return (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2];
}

}  // namespace b2s::model
