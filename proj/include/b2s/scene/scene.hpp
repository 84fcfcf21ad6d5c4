#pragma once

// Procedural driving-like scenes: a ground slab plus axis-aligned boxes,
// rendered into per-camera feature images and observed by a simulated
// spinning LiDAR whose sweeps are aggregated into the binary ground truth.

#include <numbers>
#include <vector>

#include "b2s/common/random.hpp"
#include "b2s/scene/camera.hpp"
#include "b2s/voxel/grid.hpp"

namespace b2s {

inline constexpr std::uint8_t kGroundClass = 1;

struct SceneObject {
  std::uint8_t class_id = 0;
  Vec3 center{};
  Vec3 extents{};  // full edge lengths, meters
  bool dynamic = false;

  Vec3 lo() const { return center - 0.5 * extents; }
  Vec3 hi() const { return center + 0.5 * extents; }
  /// Half-open containment, used for voxel-center tests.
  bool contains(const Vec3& p) const {
    const auto a = lo(), b = hi();
    for (int i = 0; i < 3; ++i)
      if (!(p[i] >= a[i] && p[i] < b[i])) return false;
    return true;
  }
  bool operator==(const SceneObject&) const = default;
};

struct LidarParams {
  std::uint32_t rings = 32;
  std::uint32_t ray_count = 4096;  // azimuth steps = ray_count / rings
  double max_range = 20.0;
  double mount_height = 1.8;
  double min_elevation_deg = -30.0;
  double max_elevation_deg = 10.0;
};

struct SceneParams {
  GridSpec spec{32, 32, 8, 0.5f, {-8.0f, -8.0f, -0.5f}};
  std::uint8_t num_classes = 4;  // 1 ground, then building, vehicle, pedestrian, ...
  std::uint32_t min_objects = 6;
  std::uint32_t max_objects = 12;
  RigParams rig;
  LidarParams lidar;
  std::uint32_t sweeps = 8;
  double sweep_travel = 3.0;  // max |x| offset of sweep poses, meters
  double noise_std = 0.1;

  std::uint32_t view_channels() const { return 2u + num_classes; }
};

struct Sweep {
  Pose pose;  // reference ego frame from sweep frame
  std::vector<std::array<float, 3>> points;  // sweep frame
  bool operator==(const Sweep&) const = default;
};

struct Scene {
  std::uint64_t seed = 0;
  SceneParams params;
  CameraRig rig;
  std::vector<SceneObject> objects;
  SemanticGrid world;     // every labeled voxel, observed or not
  SemanticGrid semantic;  // GT labels restricted to the GT binary grid
  BinaryGrid binary;      // aggregated sweeps plus dynamic boxes
  std::vector<float> views;  // cameras x channels x height x width
  std::vector<Sweep> sweeps;
  bool has_semantic = true;

  const GridSpec& spec() const { return params.spec; }
  std::uint8_t num_classes() const { return params.num_classes; }
};

inline bool operator==(const SceneParams& a, const SceneParams& b) {
  return a.spec == b.spec && a.num_classes == b.num_classes && a.min_objects == b.min_objects &&
         a.max_objects == b.max_objects && a.rig.cameras == b.rig.cameras && a.rig.width == b.rig.width &&
         a.rig.height == b.rig.height && a.rig.focal == b.rig.focal && a.rig.mount_height == b.rig.mount_height &&
         a.lidar.rings == b.lidar.rings && a.lidar.ray_count == b.lidar.ray_count &&
         a.lidar.max_range == b.lidar.max_range && a.lidar.mount_height == b.lidar.mount_height &&
         a.lidar.min_elevation_deg == b.lidar.min_elevation_deg &&
         a.lidar.max_elevation_deg == b.lidar.max_elevation_deg && a.sweeps == b.sweeps &&
         a.sweep_travel == b.sweep_travel && a.noise_std == b.noise_std;
}

inline bool operator==(const Scene& a, const Scene& b) {
  return a.seed == b.seed && a.params == b.params && a.rig == b.rig && a.objects == b.objects &&
         a.world == b.world && a.has_semantic == b.has_semantic &&
         (!a.has_semantic || a.semantic == b.semantic) && a.binary == b.binary && a.views == b.views &&
         a.sweeps == b.sweeps;
}

// ------------------------------------------------------------- voxelization

/// Ground slab (z layer 0) plus every object, by voxel-center containment.
inline SemanticGrid voxelize_world(const GridSpec& spec, std::uint8_t num_classes,
                                   const std::vector<SceneObject>& objects) {
  SemanticGrid g(spec, num_classes);
  for (std::uint32_t h = 0; h < spec.dims_h; ++h)
    for (std::uint32_t w = 0; w < spec.dims_w; ++w) g.set(spec.index(h, w, 0), kGroundClass);
  for (const auto& o : objects)
    for (std::size_t i = 0; i < spec.count(); ++i) {
      const auto c = spec.coord(i);
      if (c.z == 0) continue;
      if (o.contains(spec.center(c))) g.set(i, o.class_id);
    }
  return g;
}

inline void voxelize_box(BinaryGrid& g, const SceneObject& o) {
  const auto& spec = g.spec();
  for (std::size_t i = 0; i < spec.count(); ++i)
    if (o.contains(spec.center(spec.coord(i)))) g.set(i);
}

// -------------------------------------------------------------- rendering

/// Per pixel: [min(1, 1/depth), one-hot class (K), noise]; depth and class
/// channels are zero where the pixel ray hits nothing.
inline std::vector<float> render_views(const SemanticGrid& world, const CameraRig& rig, Rng& noise_rng,
                                       double noise_std) {
  const auto& spec = world.spec();
  const std::uint32_t k = world.num_classes();
  const std::uint32_t ch = 2 + k;
  std::vector<float> out;
  for (const auto& cam : rig) {
    const std::size_t plane = static_cast<std::size_t>(cam.width) * cam.height;
    const std::size_t base = out.size();
    out.resize(base + ch * plane, 0.0f);
    for (std::uint32_t v = 0; v < cam.height; ++v)
      for (std::uint32_t u = 0; u < cam.width; ++u) {
        const std::size_t px = static_cast<std::size_t>(v) * cam.width + u;
        const auto d = pixel_ray(cam, u + 0.5, v + 0.5);
        const auto hit = raycast(spec, cam.pose.t, d, std::numeric_limits<double>::infinity(),
                                 [&](std::size_t i) { return world.at(i) != 0; });
        if (hit) {
          out[base + px] = static_cast<float>(hit->t > 1.0 ? 1.0 / hit->t : 1.0);
          out[base + (world.at(hit->voxel)) * plane + px] = 1.0f;
        }
        out[base + (ch - 1) * plane + px] = static_cast<float>(noise_std * noise_rng.normal());
      }
  }
  return out;
}

// ------------------------------------------------------------------ lidar

inline std::vector<Vec3> lidar_directions(const LidarParams& p) {
  require(p.ray_count > 0 && p.rings > 0, ErrorKind::invalid_argument, "lidar ray_count must be positive");
  const std::uint32_t rings = std::min(p.rings, p.ray_count);
  const std::uint32_t az = p.ray_count / rings;
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(rings) * az);
  const double deg = std::numbers::pi / 180.0;
  for (std::uint32_t r = 0; r < rings; ++r) {
    const double el = rings == 1 ? p.min_elevation_deg * deg
                                 : (p.min_elevation_deg + (p.max_elevation_deg - p.min_elevation_deg) * r /
                                                              (rings - 1)) * deg;
    for (std::uint32_t a = 0; a < az; ++a) {
      const double phi = 2.0 * std::numbers::pi * a / az;
      dirs.push_back({std::cos(el) * std::cos(phi), std::cos(el) * std::sin(phi), std::sin(el)});
    }
  }
  return dirs;
}

/// One sweep from sensor pose `ego_pose` (reference-from-sweep). Each ray
/// returns the entry point of the first occupied voxel within range, pulled
/// 1e-4 m inside that voxel, expressed in the sweep frame.
inline std::vector<std::array<float, 3>> simulate_lidar(const SemanticGrid& world, const Pose& ego_pose,
                                                        const LidarParams& p) {
  const auto& spec = world.spec();
  const Vec3 origin = ego_pose.apply({0.0, 0.0, p.mount_height});
  std::vector<std::array<float, 3>> pts;
  constexpr double kInset = 1e-4;
  for (const auto& local_dir : lidar_directions(p)) {
    const Vec3 d = mat_vec(ego_pose.R, local_dir);
    const auto hit = raycast(spec, origin, d, p.max_range, [&](std::size_t i) { return world.at(i) != 0; });
    if (!hit) continue;
    Vec3 q = origin + hit->t * d;
    const auto c = spec.coord(hit->voxel);
    const std::array<std::uint32_t, 3> cc{c.h, c.w, c.z};
    for (int a = 0; a < 3; ++a) {
      const double lo = spec.origin[a] + static_cast<double>(cc[a]) * spec.voxel_size;
      q[a] = std::clamp(q[a], lo + kInset, lo + spec.voxel_size - kInset);
    }
    const auto local = ego_pose.apply_inverse(q);
    pts.push_back({static_cast<float>(local[0]), static_cast<float>(local[1]), static_cast<float>(local[2])});
  }
  return pts;
}

/// Sweep points moved into the reference frame and voxelized, unioned with
/// the voxelized boxes.
inline BinaryGrid aggregate_binary_gt(const std::vector<Sweep>& sweeps, const std::vector<SceneObject>& boxes,
                                      const GridSpec& spec) {
  require(!sweeps.empty(), ErrorKind::invalid_argument, "aggregation needs at least one sweep");
  BinaryGrid g(spec);
  for (const auto& s : sweeps)
    for (const auto& p : s.points) {
      const auto q = s.pose.apply({p[0], p[1], p[2]});
      if (auto c = spec.locate(q)) g.set(*c);
    }
  for (const auto& b : boxes) voxelize_box(g, b);
  return g;
}

// ------------------------------------------------------------- generation

namespace detail {

inline SceneObject sample_object(Rng& rng, std::uint8_t cls, const GridSpec& spec) {
  SceneObject o;
  o.class_id = cls;
  const double ground_top = spec.origin[2] + spec.voxel_size;
  const auto hi = spec.extent_max();
  switch ((cls - 2) % 3) {
    case 0:  // building
      o.extents = {rng.uniform(1.5, 4.0), rng.uniform(1.5, 4.0), rng.uniform(2.0, 3.5)};
      o.dynamic = false;
      break;
    case 1: {  // vehicle
      const double len = rng.uniform(3.5, 4.5), wid = rng.uniform(1.6, 2.0);
      const bool along_x = rng.uniform() < 0.5;
      o.extents = {along_x ? len : wid, along_x ? wid : len, rng.uniform(1.4, 1.8)};
      o.dynamic = true;
      break;
    }
    default:  // pedestrian
      o.extents = {rng.uniform(0.5, 0.8), rng.uniform(0.5, 0.8), rng.uniform(1.5, 1.9)};
      o.dynamic = true;
      break;
  }
  o.center = {rng.uniform(spec.origin[0], hi[0]), rng.uniform(spec.origin[1], hi[1]),
              ground_top + 0.5 * o.extents[2]};
  return o;
}

inline bool boxes_overlap(const Vec3& alo, const Vec3& ahi, const Vec3& blo, const Vec3& bhi, double gap) {
  for (int a = 0; a < 2; ++a)
    if (ahi[a] + gap <= blo[a] || bhi[a] + gap <= alo[a]) return false;
  return true;
}

}  // namespace detail

/// Region around the ego path that objects never occupy (sensors live here).
struct KeepOut {
  Vec3 lo{-4.5, -1.5, -1e9};
  Vec3 hi{4.5, 1.5, 1e9};
};

inline Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  const auto& spec = params.spec;
  spec.validate();
  require(params.min_objects <= params.max_objects, ErrorKind::invalid_argument, "object count range inverted");
  require(params.num_classes >= 1, ErrorKind::invalid_argument, "need at least the ground class");
  require(params.max_objects == 0 || params.num_classes >= 2, ErrorKind::invalid_argument,
          "objects need a class beyond ground");
  require(params.sweeps >= 1, ErrorKind::invalid_argument, "need at least one sweep");
  require(params.sweep_travel + 0.5 < KeepOut{}.hi[0], ErrorKind::invalid_argument,
          "sweep travel leaves the keep-out corridor");

  Scene s;
  s.seed = seed;
  s.params = params;
  s.rig = make_ring_rig(params.rig);

  Rng obj_rng(mix_seed(seed, 1));
  const auto n_obj = static_cast<std::uint32_t>(obj_rng.integer(params.min_objects, params.max_objects));
  const KeepOut keep;
  for (std::uint32_t k = 0; k < n_obj; ++k) {
    const auto cls = static_cast<std::uint8_t>(obj_rng.integer(2, params.num_classes));
    for (int attempt = 0; attempt < 50; ++attempt) {
      const auto o = detail::sample_object(obj_rng, cls, spec);
      bool ok = !detail::boxes_overlap(o.lo(), o.hi(), keep.lo, keep.hi, 0.0);
      for (const auto& e : s.objects) ok = ok && !detail::boxes_overlap(o.lo(), o.hi(), e.lo(), e.hi(), 0.25);
      if (ok) {
        s.objects.push_back(o);
        break;
      }
    }
  }

  s.world = voxelize_world(spec, params.num_classes, s.objects);
  std::size_t free = 0;
  for (auto l : s.world.labels()) free += l == 0;
  if (free == 0) fail(ErrorKind::degenerate_scene, "scene has no free voxels");

  Rng pose_rng(mix_seed(seed, 2));
  for (std::uint32_t k = 0; k < params.sweeps; ++k) {
    Sweep sw;
    if (k > 0) {
      sw.pose.R = yaw_rotation(pose_rng.uniform(-0.15, 0.15));
      sw.pose.t = {pose_rng.uniform(-params.sweep_travel, params.sweep_travel), pose_rng.uniform(-0.5, 0.5), 0.0};
    }
    sw.points = simulate_lidar(s.world, sw.pose, params.lidar);
    s.sweeps.push_back(std::move(sw));
  }
  std::vector<SceneObject> dynamic;
  for (const auto& o : s.objects)
    if (o.dynamic) dynamic.push_back(o);
  s.binary = aggregate_binary_gt(s.sweeps, dynamic, spec);

  std::vector<std::uint8_t> labels(spec.count(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (s.binary.get(i)) labels[i] = s.world.at(i);
  s.semantic = SemanticGrid(spec, params.num_classes, std::move(labels));

  Rng noise_rng(mix_seed(seed, 3));
  s.views = render_views(s.world, s.rig, noise_rng, params.noise_std);
  return s;
}

}  // namespace b2s
