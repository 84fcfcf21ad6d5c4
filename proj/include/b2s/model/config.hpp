#pragma once

#include <string>
#include <vector>

#include "b2s/common/kv.hpp"
#include "b2s/common/random.hpp"
#include "b2s/scene/scene.hpp"

namespace b2s::model {

enum class Transform : std::uint8_t { lift_splat, deformable };
enum class Strategy : std::uint8_t { intermediate, multi_head, replacing };
enum class Mode : std::uint8_t { onboard, offboard };

inline std::string_view to_string(Transform t) { return t == Transform::lift_splat ? "lift_splat" : "deformable"; }
inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::intermediate: return "intermediate";
    case Strategy::multi_head: return "multi_head";
    case Strategy::replacing: return "replacing";
  }
  return "?";
}

inline Transform parse_transform(std::string_view s) {
  if (s == "lift_splat") return Transform::lift_splat;
  if (s == "deformable") return Transform::deformable;
  fail(ErrorKind::config, "unknown transform '" + std::string(s) + "' (lift_splat | deformable)");
}
inline Strategy parse_strategy(std::string_view s) {
  if (s == "intermediate") return Strategy::intermediate;
  if (s == "multi_head") return Strategy::multi_head;
  if (s == "replacing") return Strategy::replacing;
  fail(ErrorKind::config, "unknown strategy '" + std::string(s) + "' (intermediate | multi_head | replacing)");
}

/// Shape of what the model consumes; taken from the scene generation params.
struct InputSpec {
  GridSpec grid;
  std::uint8_t num_classes = 4;
  std::uint32_t cameras = 4;
  std::uint32_t image_w = 56;
  std::uint32_t image_h = 32;
  std::uint32_t view_channels = 6;

  static InputSpec from(const SceneParams& p) {
    return {p.spec, p.num_classes, p.rig.cameras, p.rig.width, p.rig.height, p.view_channels()};
  }
};

struct ModelConfig {
  Transform transform = Transform::lift_splat;
  Strategy strategy = Strategy::intermediate;

  // compact volume B; mid B' doubles h and w and scales z by mid_z_up;
  // full B'' doubles h and w again and scales z by full_z_up.
  std::uint32_t compact_h = 8, compact_w = 8, compact_z = 8;
  std::uint32_t mid_z_up = 1, full_z_up = 1;

  std::uint32_t encoder_c1 = 16;     // 1/2-scale feature channels
  std::uint32_t channels = 32;       // C, also the 1/4-scale image feature width
  std::uint32_t mid_channels = 32;   // C'
  std::uint32_t full_channels = 16;  // C''
  std::uint32_t mlp_hidden = 64;

  std::uint32_t dense_layers = 2;
  std::uint32_t sparse_layers = 1;
  std::uint32_t heads = 4;
  std::uint32_t self_points = 4;
  std::uint32_t cross_points = 8;
  bool sparse_cross_attention = true;

  std::uint32_t depth_bins = 16;
  double depth_min = 0.5;
  double depth_max = 12.0;

  double tau = 0.5;
  double focal_gamma = 2.0;
  std::vector<double> focal_alpha;  // empty: all ones
  double binary_loss_weight = 1.0;

  std::array<std::uint32_t, 3> compact_dims() const { return {compact_h, compact_w, compact_z}; }
  std::array<std::uint32_t, 3> mid_dims() const { return {compact_h * 2, compact_w * 2, compact_z * mid_z_up}; }
  std::array<std::uint32_t, 3> full_dims() const {
    const auto m = mid_dims();
    return {m[0] * 2, m[1] * 2, m[2] * full_z_up};
  }

  void validate(const InputSpec& in) const {
    auto chk = [](bool c, const std::string& m) { require(c, ErrorKind::config, "model: " + m); };
    chk(compact_h > 0 && compact_w > 0 && compact_z > 0 && mid_z_up > 0 && full_z_up > 0, "dims must be positive");
    const auto f = full_dims();
    chk(f[0] == in.grid.dims_h && f[1] == in.grid.dims_w && f[2] == in.grid.dims_z,
        "compact dims x upsampling must equal the grid dims");
    chk(heads > 0 && channels % heads == 0 && mid_channels % heads == 0, "channels must divide by heads");
    chk(self_points > 0 && cross_points > 0, "sampling points must be positive");
    chk(encoder_c1 > 0 && channels > 0 && mid_channels > 0 && full_channels > 0 && mlp_hidden > 0,
        "channel counts must be positive");
    chk(depth_bins > 0 && depth_min > 0.0 && depth_max > depth_min, "depth bins/range invalid");
    chk(tau > 0.0 && tau < 1.0, "tau must be in (0, 1)");
    chk(focal_gamma >= 0.0, "focal gamma must be non-negative");
    chk(focal_alpha.empty() || focal_alpha.size() == in.num_classes + 1u, "focal alpha needs K+1 weights");
    chk(transform == Transform::lift_splat || dense_layers > 0,
        "the deformable transform needs at least one dense layer to read the images");
    chk(in.image_h % 4 == 0 && in.image_w % 4 == 0, "image size must divide by 4");
  }
};

/// Hash over everything that determines parameter names and shapes, plus the
/// input geometry. Strategy, threshold and loss settings are excluded so a
/// binary-pretrained checkpoint can seed every fine-tuning strategy.
inline std::uint64_t architecture_fingerprint(const ModelConfig& c, const InputSpec& in) {
  kv::Document d;
  d.set("transform", std::string(to_string(c.transform)));
  d.set("compact", std::to_string(c.compact_h) + " " + std::to_string(c.compact_w) + " " + std::to_string(c.compact_z));
  d.set("z_up", std::to_string(c.mid_z_up) + " " + std::to_string(c.full_z_up));
  d.set("channels", std::to_string(c.encoder_c1) + " " + std::to_string(c.channels) + " " +
                        std::to_string(c.mid_channels) + " " + std::to_string(c.full_channels) + " " +
                        std::to_string(c.mlp_hidden));
  d.set("layers", std::to_string(c.dense_layers) + " " + std::to_string(c.sparse_layers));
  d.set("attention", std::to_string(c.heads) + " " + std::to_string(c.self_points) + " " +
                         std::to_string(c.cross_points) + " " + (c.sparse_cross_attention ? "1" : "0"));
  d.set("depth", std::to_string(c.depth_bins) + " " + kv::fmt(c.depth_min) + " " + kv::fmt(c.depth_max));
  d.set("grid", std::to_string(in.grid.dims_h) + " " + std::to_string(in.grid.dims_w) + " " +
                    std::to_string(in.grid.dims_z) + " " + kv::fmt(in.grid.voxel_size) + " " +
                    kv::fmt(in.grid.origin[0]) + " " + kv::fmt(in.grid.origin[1]) + " " + kv::fmt(in.grid.origin[2]));
  d.set("input", std::to_string(in.num_classes) + " " + std::to_string(in.cameras) + " " +
                     std::to_string(in.image_w) + " " + std::to_string(in.image_h) + " " +
                     std::to_string(in.view_channels));
  return fnv1a(d.str());
}

inline void write_model_config(kv::Document& d, const ModelConfig& c, const std::string& prefix = "model.") {
  d.set(prefix + "transform", std::string(to_string(c.transform)));
  d.set(prefix + "strategy", std::string(to_string(c.strategy)));
  d.set(prefix + "compact", std::to_string(c.compact_h) + " " + std::to_string(c.compact_w) + " " +
                                std::to_string(c.compact_z));
  d.set(prefix + "z_up", std::to_string(c.mid_z_up) + " " + std::to_string(c.full_z_up));
  d.set(prefix + "encoder_channels", std::to_string(c.encoder_c1));
  d.set(prefix + "channels", std::to_string(c.channels));
  d.set(prefix + "mid_channels", std::to_string(c.mid_channels));
  d.set(prefix + "full_channels", std::to_string(c.full_channels));
  d.set(prefix + "mlp_hidden", std::to_string(c.mlp_hidden));
  d.set(prefix + "dense_layers", std::to_string(c.dense_layers));
  d.set(prefix + "sparse_layers", std::to_string(c.sparse_layers));
  d.set(prefix + "heads", std::to_string(c.heads));
  d.set(prefix + "self_points", std::to_string(c.self_points));
  d.set(prefix + "cross_points", std::to_string(c.cross_points));
  d.set(prefix + "sparse_cross_attention", c.sparse_cross_attention ? "1" : "0");
  d.set(prefix + "depth_bins", std::to_string(c.depth_bins));
  d.set(prefix + "depth_range", kv::fmt(c.depth_min) + " " + kv::fmt(c.depth_max));
  d.set(prefix + "tau", kv::fmt(c.tau));
  d.set(prefix + "focal_gamma", kv::fmt(c.focal_gamma));
  std::string alpha;
  for (std::size_t i = 0; i < c.focal_alpha.size(); ++i) alpha += (i ? " " : "") + kv::fmt(c.focal_alpha[i]);
  d.set(prefix + "focal_alpha", alpha.empty() ? "1" : alpha);
  d.set(prefix + "binary_loss_weight", kv::fmt(c.binary_loss_weight));
}

/// Reads present keys over defaults; returns the keys consumed.
inline std::vector<std::string> read_model_config(const kv::Document& d, ModelConfig& c,
                                                  const std::string& prefix = "model.") {
  std::vector<std::string> used;
  auto get = [&](const char* k) -> const std::string* {
    if (!d.has(prefix + k)) return nullptr;
    used.push_back(prefix + k);
    return &d.get(prefix + k);
  };
  auto u32 = [&](const std::string& v, const char* k) { return kv::to_int<std::uint32_t>(v, std::string(prefix) + k); };
  auto nums = [&](const std::string& v, std::size_t n, const char* k) {
    const auto parts = kv::split(v, " \t,");
    require(parts.size() == n, ErrorKind::config, prefix + k + ": expected " + std::to_string(n) + " values");
    return parts;
  };
  if (auto v = get("transform")) c.transform = parse_transform(*v);
  if (auto v = get("strategy")) c.strategy = parse_strategy(*v);
  if (auto v = get("compact")) {
    const auto p = nums(*v, 3, "compact");
    c.compact_h = u32(p[0], "compact");
    c.compact_w = u32(p[1], "compact");
    c.compact_z = u32(p[2], "compact");
  }
  if (auto v = get("z_up")) {
    const auto p = nums(*v, 2, "z_up");
    c.mid_z_up = u32(p[0], "z_up");
    c.full_z_up = u32(p[1], "z_up");
  }
  if (auto v = get("encoder_channels")) c.encoder_c1 = u32(*v, "encoder_channels");
  if (auto v = get("channels")) c.channels = u32(*v, "channels");
  if (auto v = get("mid_channels")) c.mid_channels = u32(*v, "mid_channels");
  if (auto v = get("full_channels")) c.full_channels = u32(*v, "full_channels");
  if (auto v = get("mlp_hidden")) c.mlp_hidden = u32(*v, "mlp_hidden");
  if (auto v = get("dense_layers")) c.dense_layers = u32(*v, "dense_layers");
  if (auto v = get("sparse_layers")) c.sparse_layers = u32(*v, "sparse_layers");
  if (auto v = get("heads")) c.heads = u32(*v, "heads");
  if (auto v = get("self_points")) c.self_points = u32(*v, "self_points");
  if (auto v = get("cross_points")) c.cross_points = u32(*v, "cross_points");
  if (auto v = get("sparse_cross_attention")) c.sparse_cross_attention = u32(*v, "sparse_cross_attention") != 0;
  if (auto v = get("depth_bins")) c.depth_bins = u32(*v, "depth_bins");
  if (auto v = get("depth_range")) {
    const auto p = nums(*v, 2, "depth_range");
    c.depth_min = kv::to_double(p[0], "depth_range");
    c.depth_max = kv::to_double(p[1], "depth_range");
  }
  if (auto v = get("tau")) c.tau = kv::to_double(*v, "tau");
  if (auto v = get("focal_gamma")) c.focal_gamma = kv::to_double(*v, "focal_gamma");
  if (auto v = get("focal_alpha")) {
    c.focal_alpha.clear();
    const auto p = kv::split(*v, " \t,");
    if (!(p.size() == 1 && kv::to_double(p[0], "focal_alpha") == 1.0))
      for (const auto& x : p) c.focal_alpha.push_back(kv::to_double(x, "focal_alpha"));
  }
  if (auto v = get("binary_loss_weight")) c.binary_loss_weight = kv::to_double(*v, "binary_loss_weight");
  return used;
}

}  // namespace b2s::model
