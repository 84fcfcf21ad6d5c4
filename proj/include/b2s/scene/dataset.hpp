#pragma once

// On-disk datasets.
//
//   <root>/dataset.txt              split sizes, base seed, scene list
//   <root>/<id>/scene.txt           seed, split, generation params, cameras, objects
//   <root>/<id>/binary.grid         GT binary grid
//   <root>/<id>/semantic.grid       GT semantic grid (absent for pretrain-binary scenes)
//   <root>/<id>/views.f32           "B2SV" | u16 version | u32 cameras, channels, height, width | f32 data
//   <root>/<id>/sweeps.f32          "B2SL" | u16 version | u32 sweeps | per sweep: 12 x f64 pose
//                                   (R row-major, t) | u32 points | 3 x f32 per point

#include <filesystem>
#include <string>

#include "b2s/common/kv.hpp"
#include "b2s/scene/scene.hpp"
#include "b2s/voxel/grid_io.hpp"

namespace b2s {

enum class Split : std::uint8_t { pretrain_binary, finetune_semantic, val };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::pretrain_binary: return "pretrain-binary";
    case Split::finetune_semantic: return "finetune-semantic";
    case Split::val: return "val";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "pretrain-binary" || s == "pretrain") return Split::pretrain_binary;
  if (s == "finetune-semantic" || s == "finetune") return Split::finetune_semantic;
  if (s == "val") return Split::val;
  fail(ErrorKind::config, "unknown split '" + std::string(s) + "'");
}

namespace detail {

inline constexpr std::string_view kViewsMagic = "B2SV";
inline constexpr std::string_view kSweepsMagic = "B2SL";
inline constexpr std::uint16_t kSceneFileVersion = 1;

inline std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " " : "") + parts[i];
  return out;
}

inline std::vector<double> numbers(const kv::Document& d, const std::string& key, std::size_t n) {
  const auto parts = kv::split(d.get(key), " \t");
  require(parts.size() == n, ErrorKind::config,
          "key '" + key + "': expected " + std::to_string(n) + " numbers, got " + std::to_string(parts.size()));
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(kv::to_double(p, key));
  return out;
}

}  // namespace detail

/// Generation parameters as key/value pairs (shared with experiment configs).
inline void write_scene_params(kv::Document& d, const SceneParams& p, const std::string& prefix = "") {
  const auto& s = p.spec;
  d.set(prefix + "grid", detail::join({std::to_string(s.dims_h), std::to_string(s.dims_w), std::to_string(s.dims_z),
                                       kv::fmt(s.voxel_size), kv::fmt(s.origin[0]), kv::fmt(s.origin[1]),
                                       kv::fmt(s.origin[2])}));
  d.set(prefix + "num_classes", std::to_string(p.num_classes));
  d.set(prefix + "objects", std::to_string(p.min_objects) + " " + std::to_string(p.max_objects));
  d.set(prefix + "cameras", std::to_string(p.rig.cameras));
  d.set(prefix + "image", std::to_string(p.rig.width) + " " + std::to_string(p.rig.height));
  d.set(prefix + "focal", kv::fmt(p.rig.focal));
  d.set(prefix + "camera_height", kv::fmt(p.rig.mount_height));
  d.set(prefix + "lidar_rings", std::to_string(p.lidar.rings));
  d.set(prefix + "lidar_rays", std::to_string(p.lidar.ray_count));
  d.set(prefix + "lidar_range", kv::fmt(p.lidar.max_range));
  d.set(prefix + "lidar_height", kv::fmt(p.lidar.mount_height));
  d.set(prefix + "lidar_elevation", kv::fmt(p.lidar.min_elevation_deg) + " " + kv::fmt(p.lidar.max_elevation_deg));
  d.set(prefix + "sweeps", std::to_string(p.sweeps));
  d.set(prefix + "sweep_travel", kv::fmt(p.sweep_travel));
  d.set(prefix + "noise_std", kv::fmt(p.noise_std));
}

/// Reads whichever keys are present, keeping defaults for the rest. Returns
/// the keys consumed.
inline std::vector<std::string> read_scene_params(const kv::Document& d, SceneParams& p,
                                                  const std::string& prefix = "") {
  std::vector<std::string> used;
  auto has = [&](const char* k) {
    if (!d.has(prefix + k)) return false;
    used.push_back(prefix + k);
    return true;
  };
  auto u32 = [&](const std::string& s, const std::string& what) { return kv::to_int<std::uint32_t>(s, what); };
  if (has("grid")) {
    const auto v = kv::split(d.get(prefix + "grid"), " \t");
    require(v.size() == 7, ErrorKind::config, "grid: expected 'H W Z voxel_size ox oy oz'");
    p.spec.dims_h = u32(v[0], "grid");
    p.spec.dims_w = u32(v[1], "grid");
    p.spec.dims_z = u32(v[2], "grid");
    p.spec.voxel_size = static_cast<float>(kv::to_double(v[3], "grid"));
    for (int a = 0; a < 3; ++a) p.spec.origin[a] = static_cast<float>(kv::to_double(v[4 + a], "grid"));
  }
  if (has("num_classes")) {
    const auto k = kv::to_int<int>(d.get(prefix + "num_classes"), "num_classes");
    require(k >= 1 && k <= 254, ErrorKind::config, "num_classes must be in 1..254");
    p.num_classes = static_cast<std::uint8_t>(k);
  }
  if (has("objects")) {
    const auto v = kv::split(d.get(prefix + "objects"), " \t");
    require(v.size() == 2, ErrorKind::config, "objects: expected 'min max'");
    p.min_objects = u32(v[0], "objects");
    p.max_objects = u32(v[1], "objects");
  }
  if (has("cameras")) p.rig.cameras = u32(d.get(prefix + "cameras"), "cameras");
  if (has("image")) {
    const auto v = kv::split(d.get(prefix + "image"), " \t");
    require(v.size() == 2, ErrorKind::config, "image: expected 'width height'");
    p.rig.width = u32(v[0], "image");
    p.rig.height = u32(v[1], "image");
  }
  if (has("focal")) p.rig.focal = kv::to_double(d.get(prefix + "focal"), "focal");
  if (has("camera_height")) p.rig.mount_height = kv::to_double(d.get(prefix + "camera_height"), "camera_height");
  if (has("lidar_rings")) p.lidar.rings = u32(d.get(prefix + "lidar_rings"), "lidar_rings");
  if (has("lidar_rays")) p.lidar.ray_count = u32(d.get(prefix + "lidar_rays"), "lidar_rays");
  if (has("lidar_range")) p.lidar.max_range = kv::to_double(d.get(prefix + "lidar_range"), "lidar_range");
  if (has("lidar_height")) p.lidar.mount_height = kv::to_double(d.get(prefix + "lidar_height"), "lidar_height");
  if (has("lidar_elevation")) {
    const auto v = kv::split(d.get(prefix + "lidar_elevation"), " \t");
    require(v.size() == 2, ErrorKind::config, "lidar_elevation: expected 'min max' degrees");
    p.lidar.min_elevation_deg = kv::to_double(v[0], "lidar_elevation");
    p.lidar.max_elevation_deg = kv::to_double(v[1], "lidar_elevation");
  }
  if (has("sweeps")) p.sweeps = u32(d.get(prefix + "sweeps"), "sweeps");
  if (has("sweep_travel")) p.sweep_travel = kv::to_double(d.get(prefix + "sweep_travel"), "sweep_travel");
  if (has("noise_std")) p.noise_std = kv::to_double(d.get(prefix + "noise_std"), "noise_std");
  return used;
}

inline io::Bytes encode_views(const Scene& s) {
  io::ByteWriter w;
  w.magic(detail::kViewsMagic);
  w.u16(detail::kSceneFileVersion);
  w.u32(s.params.rig.cameras);
  w.u32(s.params.view_channels());
  w.u32(s.params.rig.height);
  w.u32(s.params.rig.width);
  for (float v : s.views) w.f32(v);
  return std::move(w).take();
}

inline std::vector<float> decode_views(std::span<const std::uint8_t> data, const SceneParams& p) {
  io::ByteReader r(data);
  r.expect_magic(detail::kViewsMagic);
  if (r.u16() != detail::kSceneFileVersion) fail(ErrorKind::version_mismatch, "views file version");
  const auto n = r.u32(), c = r.u32(), h = r.u32(), w = r.u32();
  require(n == p.rig.cameras && c == p.view_channels() && h == p.rig.height && w == p.rig.width,
          ErrorKind::shape_mismatch, "views header does not match the scene's rig");
  std::vector<float> out(static_cast<std::size_t>(n) * c * h * w);
  for (auto& v : out) v = r.f32();
  require(r.at_end(), ErrorKind::invalid_argument, "trailing bytes after views");
  return out;
}

inline io::Bytes encode_sweeps(const std::vector<Sweep>& sweeps) {
  io::ByteWriter w;
  w.magic(detail::kSweepsMagic);
  w.u16(detail::kSceneFileVersion);
  w.u32(static_cast<std::uint32_t>(sweeps.size()));
  for (const auto& s : sweeps) {
    for (const auto& row : s.pose.R)
      for (double v : row) w.f64(v);
    for (double v : s.pose.t) w.f64(v);
    w.u32(static_cast<std::uint32_t>(s.points.size()));
    for (const auto& p : s.points)
      for (float v : p) w.f32(v);
  }
  return std::move(w).take();
}

inline std::vector<Sweep> decode_sweeps(std::span<const std::uint8_t> data) {
  io::ByteReader r(data);
  r.expect_magic(detail::kSweepsMagic);
  if (r.u16() != detail::kSceneFileVersion) fail(ErrorKind::version_mismatch, "sweeps file version");
  std::vector<Sweep> out(r.u32());
  for (auto& s : out) {
    for (auto& row : s.pose.R)
      for (double& v : row) v = r.f64();
    for (double& v : s.pose.t) v = r.f64();
    s.points.resize(r.u32());
    for (auto& p : s.points)
      for (float& v : p) v = r.f32();
  }
  require(r.at_end(), ErrorKind::invalid_argument, "trailing bytes after sweeps");
  return out;
}

inline void save_scene(const std::filesystem::path& dir, const Scene& s, Split split) {
  kv::Document d;
  d.set("seed", std::to_string(s.seed));
  d.set("split", std::string(to_string(split)));
  write_scene_params(d, s.params);
  for (std::size_t k = 0; k < s.rig.size(); ++k) {
    const auto& c = s.rig[k];
    std::vector<std::string> f{kv::fmt(c.fx), kv::fmt(c.fy), kv::fmt(c.cx), kv::fmt(c.cy),
                               std::to_string(c.width), std::to_string(c.height)};
    for (const auto& row : c.pose.R)
      for (double v : row) f.push_back(kv::fmt(v));
    for (double v : c.pose.t) f.push_back(kv::fmt(v));
    d.set("camera." + std::to_string(k), detail::join(f));
  }
  d.set("object_count", std::to_string(s.objects.size()));
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    const auto& o = s.objects[k];
    d.set("object." + std::to_string(k),
          detail::join({std::to_string(o.class_id), kv::fmt(o.center[0]), kv::fmt(o.center[1]), kv::fmt(o.center[2]),
                        kv::fmt(o.extents[0]), kv::fmt(o.extents[1]), kv::fmt(o.extents[2]),
                        o.dynamic ? "dynamic" : "static"}));
  }
  d.set("has_semantic", s.has_semantic ? "1" : "0");
  std::filesystem::create_directories(dir);
  io::write_text(dir / "scene.txt", d.str());
  save_grid(s.binary, dir / "binary.grid");
  if (s.has_semantic) save_grid(s.semantic, dir / "semantic.grid");
  io::write_file(dir / "views.f32", encode_views(s));
  io::write_file(dir / "sweeps.f32", encode_sweeps(s.sweeps));
}

inline Scene load_scene(const std::filesystem::path& dir, Split* split = nullptr) {
  const auto d = kv::Document::parse(io::read_text(dir / "scene.txt"), (dir / "scene.txt").string());
  Scene s;
  s.seed = kv::to_int<std::uint64_t>(d.get("seed"), "seed");
  if (split) *split = parse_split(d.get("split"));
  read_scene_params(d, s.params);
  for (std::uint32_t k = 0; k < s.params.rig.cameras; ++k) {
    const auto v = detail::numbers(d, "camera." + std::to_string(k), 18);
    Camera c;
    c.fx = v[0];
    c.fy = v[1];
    c.cx = v[2];
    c.cy = v[3];
    c.width = static_cast<std::uint32_t>(v[4]);
    c.height = static_cast<std::uint32_t>(v[5]);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c.pose.R[i][j] = v[6 + 3 * i + j];
    for (int i = 0; i < 3; ++i) c.pose.t[i] = v[15 + i];
    c.validate();
    s.rig.push_back(c);
  }
  const auto n_obj = kv::to_int<std::size_t>(d.get("object_count"), "object_count");
  for (std::size_t k = 0; k < n_obj; ++k) {
    const auto key = "object." + std::to_string(k);
    const auto parts = kv::split(d.get(key), " \t");
    require(parts.size() == 8, ErrorKind::config, key + ": expected 8 fields");
    SceneObject o;
    o.class_id = kv::to_int<std::uint8_t>(parts[0], key);
    for (int a = 0; a < 3; ++a) {
      o.center[a] = kv::to_double(parts[1 + a], key);
      o.extents[a] = kv::to_double(parts[4 + a], key);
    }
    o.dynamic = parts[7] == "dynamic";
    s.objects.push_back(o);
  }
  s.has_semantic = d.get("has_semantic") == "1";
  s.world = voxelize_world(s.params.spec, s.params.num_classes, s.objects);
  s.binary = load_binary_grid(dir / "binary.grid");
  require(s.binary.spec() == s.params.spec, ErrorKind::spec_mismatch, "binary grid spec differs from scene.txt");
  if (s.has_semantic) {
    s.semantic = load_semantic_grid(dir / "semantic.grid", s.params.num_classes);
    require(s.semantic.spec() == s.params.spec, ErrorKind::spec_mismatch,
            "semantic grid spec differs from scene.txt");
  }
  s.views = decode_views(io::read_file(dir / "views.f32"), s.params);
  s.sweeps = decode_sweeps(io::read_file(dir / "sweeps.f32"));
  return s;
}

/// Drops the semantic labels (binary-only pretraining scenes).
inline void strip_semantic(Scene& s) {
  s.has_semantic = false;
  s.semantic = SemanticGrid();
}

struct DatasetEntry {
  std::string id;
  Split split = Split::val;
  std::uint64_t seed = 0;
};

struct DatasetPlan {
  SceneParams params;
  std::uint64_t seed = 0;
  std::uint32_t pretrain = 0;
  std::uint32_t finetune = 0;
  std::uint32_t val = 0;
};

/// Each split draws seeds from its own stream, so the scenes of one split do
/// not change when another split is resized, and a smaller split is a prefix
/// of a larger one.
inline std::vector<DatasetEntry> plan_entries(const DatasetPlan& plan) {
  std::vector<DatasetEntry> out;
  auto add = [&](Split split, const char* prefix, std::uint32_t n) {
    const auto stream = mix_seed(plan.seed, 100 + static_cast<std::uint64_t>(split));
    for (std::uint32_t k = 0; k < n; ++k) {
      char id[48];
      std::snprintf(id, sizeof id, "%s_%05u", prefix, k);
      out.push_back({id, split, mix_seed(stream, k)});
    }
  };
  add(Split::pretrain_binary, "pretrain", plan.pretrain);
  add(Split::finetune_semantic, "finetune", plan.finetune);
  add(Split::val, "val", plan.val);
  return out;
}

inline Scene make_dataset_scene(const DatasetPlan& plan, const DatasetEntry& e) {
  auto s = generate_scene(e.seed, plan.params);
  if (e.split == Split::pretrain_binary) strip_semantic(s);
  return s;
}

inline std::string dataset_manifest(const DatasetPlan& plan, const std::vector<DatasetEntry>& entries,
                                    std::uint64_t fingerprint) {
  kv::Document d;
  d.set("fingerprint", std::to_string(fingerprint));
  d.set("seed", std::to_string(plan.seed));
  d.set("pretrain-binary", std::to_string(plan.pretrain));
  d.set("finetune-semantic", std::to_string(plan.finetune));
  d.set("val", std::to_string(plan.val));
  write_scene_params(d, plan.params, "scene.");
  for (const auto& e : entries)
    d.set("entry." + e.id, std::string(to_string(e.split)) + " " + std::to_string(e.seed));
  return d.str();
}

struct DatasetIndex {
  std::uint64_t fingerprint = 0;
  DatasetPlan plan;
  std::vector<DatasetEntry> entries;

  std::vector<DatasetEntry> of(Split s) const {
    std::vector<DatasetEntry> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(e);
    return out;
  }
};

inline DatasetIndex load_dataset_index(const std::filesystem::path& root) {
  const auto d = kv::Document::parse(io::read_text(root / "dataset.txt"), (root / "dataset.txt").string());
  DatasetIndex idx;
  idx.fingerprint = kv::to_int<std::uint64_t>(d.get("fingerprint"), "fingerprint");
  idx.plan.seed = kv::to_int<std::uint64_t>(d.get("seed"), "seed");
  idx.plan.pretrain = kv::to_int<std::uint32_t>(d.get("pretrain-binary"));
  idx.plan.finetune = kv::to_int<std::uint32_t>(d.get("finetune-semantic"));
  idx.plan.val = kv::to_int<std::uint32_t>(d.get("val"));
  read_scene_params(d, idx.plan.params, "scene.");
  for (const auto& k : d.keys()) {
    if (!k.starts_with("entry.")) continue;
    const auto parts = kv::split(d.get(k), " \t");
    require(parts.size() == 2, ErrorKind::config, k + ": expected 'split seed'");
    idx.entries.push_back({k.substr(6), parse_split(parts[0]), kv::to_int<std::uint64_t>(parts[1], k)});
  }
  return idx;
}

}  // namespace b2s
