#pragma once

// Camera-only occupancy network:
//
//   views -> encoder (1/2, 1/4 maps) -> image-to-3D transform -> compact B
//         -> dense layers -> binary decoder (B', 1 logit per voxel)
//         -> gather occupied voxels -> sparse layers -> semantic decoder
//
// Both upsampling steps are transposed convolutions with kernel = stride:
// a linear layer emits every child's features, unshuffle3d places them.

#include <optional>

#include "b2s/model/config.hpp"
#include "b2s/model/layers.hpp"
#include "b2s/nn/losses.hpp"
#include "b2s/voxel/grid.hpp"

namespace b2s::model {

/// Parameters trained during binary pretraining.
inline bool in_pretrain_partition(const std::string& name) {
  for (const char* p : {"encoder.", "lift.", "query.", "dense.", "binary."})
    if (name.starts_with(p)) return true;
  return false;
}

struct ForwardResult {
  Tensor binary_logits;    // [mid cells, 1]; empty for the replacing strategy
  Tensor semantic_logits;  // [full cells, K+1]
  std::vector<std::size_t> gathered;  // mid-volume rows refined by the sparse layers
  Tensor compact;          // B   [compact cells, C]
  Tensor mid;              // B'  [mid cells, C']
};

struct RigGeometry {
  std::vector<std::uint32_t> splat_target;  // per (camera, 1/4 pixel, depth bin)
  ViewHits compact_hits;
  ViewHits mid_hits;
};

class Model {
 public:
  Model(ModelConfig cfg, InputSpec in, std::uint64_t seed) : cfg_(std::move(cfg)), in_(in) {
    cfg_.validate(in_);
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    const std::size_t c = cfg_.channels, cm = cfg_.mid_channels, cf = cfg_.full_channels;
    conv1_w_ = ps_.add_uniform("encoder.conv1.w", {cfg_.encoder_c1, in_.view_channels, 3, 3},
                               in_.view_channels * 9, rng);
    conv1_b_ = ps_.add_constant("encoder.conv1.b", {cfg_.encoder_c1}, 0.0);
    conv2_w_ = ps_.add_uniform("encoder.conv2.w", {c, cfg_.encoder_c1, 3, 3}, cfg_.encoder_c1 * 9, rng);
    conv2_b_ = ps_.add_constant("encoder.conv2.b", {c}, 0.0);
    const auto nc = cells(cfg_.compact_dims());
    if (cfg_.transform == Transform::lift_splat) {
      depth_ = Linear::make(ps_, "lift.depth", c, cfg_.depth_bins, rng);
      context_ = Linear::make(ps_, "lift.context", c, c, rng);
    } else {
      queries_ = ps_.add_uniform("query.embed", {nc, c}, 1, rng);
    }
    for (std::uint32_t l = 0; l < cfg_.dense_layers; ++l) {
      const auto p = "dense." + std::to_string(l);
      dense_.push_back({DeformAttn::make(ps_, p + ".self", c, cfg_.heads, cfg_.self_points, 3, rng),
                        DeformAttn::make(ps_, p + ".cross", c, cfg_.heads, cfg_.cross_points, 2, rng),
                        Mlp::make(ps_, p + ".mlp", c, cfg_.mlp_hidden, rng)});
    }
    binary_up_ = Linear::make(ps_, "binary.up", c, 4 * cfg_.mid_z_up * cm, rng);
    if (cfg_.strategy != Strategy::replacing) binary_head_ = Linear::make(ps_, "binary.head", cm, 1, rng);
    if (cfg_.strategy == Strategy::intermediate) {
      for (std::uint32_t l = 0; l < cfg_.sparse_layers; ++l) {
        const auto p = "sparse." + std::to_string(l);
        SparseLayer s{DeformAttn::make(ps_, p + ".mix", cm, cfg_.heads, cfg_.self_points, 3, rng), std::nullopt,
                      Mlp::make(ps_, p + ".mlp", cm, cfg_.mlp_hidden, rng)};
        if (cfg_.sparse_cross_attention)
          s.cross = DeformAttn::make(ps_, p + ".cross", cm, cfg_.heads, cfg_.cross_points, 2, rng, c);
        sparse_.push_back(std::move(s));
      }
    }
    const std::size_t sem_in = cfg_.strategy == Strategy::intermediate ? 2 * cm : cm;
    sem_fc_ = Linear::make(ps_, "semantic.fc", sem_in, 4 * cfg_.full_z_up * cf, rng);
    sem_head_ = Linear::make(ps_, "semantic.head", cf, in_.num_classes + 1u, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const InputSpec& input() const { return in_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }
  std::uint64_t fingerprint() const { return architecture_fingerprint(cfg_, in_); }

  GridSpec mid_spec() const { return coarse_spec(cfg_.mid_dims()); }

  /// Image features at 1/4 resolution, [cameras * fh * fw, C].
  Tensor encode(const std::vector<float>& views) const {
    const std::size_t ch = in_.view_channels, h = in_.image_h, w = in_.image_w;
    const std::size_t per_cam = ch * h * w;
    require(views.size() == per_cam * in_.cameras, ErrorKind::shape_mismatch,
            "model: view tensor size " + std::to_string(views.size()));
    std::vector<Tensor> feats;
    for (std::size_t k = 0; k < in_.cameras; ++k) {
      std::vector<double> px(views.begin() + static_cast<std::ptrdiff_t>(k * per_cam),
                             views.begin() + static_cast<std::ptrdiff_t>((k + 1) * per_cam));
      const auto x = Tensor::from({ch, h, w}, std::move(px));
      const auto f1 = nn::relu(nn::conv2d(x, conv1_w_, conv1_b_, 2));
      const auto f2 = nn::relu(nn::conv2d(f1, conv2_w_, conv2_b_, 2));
      feats.push_back(nn::reshape(nn::permute(f2, {1, 2, 0}), {f2.dim(1) * f2.dim(2), f2.dim(0)}));
    }
    return nn::concat(feats, 0);
  }

  /// `gt` is the full-resolution binary ground truth; required offboard.
  ForwardResult forward(const std::vector<float>& views, const CameraRig& rig, Mode mode,
                        const BinaryGrid* gt = nullptr) const {
    if (mode == Mode::offboard) {
      require(gt != nullptr, ErrorKind::missing_gt_binary, "offboard forward needs the ground-truth binary grid");
      require(gt->spec() == in_.grid, ErrorKind::spec_mismatch, "offboard: ground-truth grid spec");
    }
    Tensor image;
    auto r = trunk(views, rig, image);
    const auto& geo = geometry(rig);
    const auto mdims = cfg_.mid_dims();
    Tensor sem_in = r.mid;
    if (cfg_.strategy == Strategy::intermediate) {
      r.gathered = mode == Mode::offboard ? gather_from_gt(*gt, r.binary_logits) : gather_predicted(r.binary_logits);
      sem_in = nn::concat({sparse_forward(r.mid, r.gathered, image, geo), r.mid}, 1);
    }
    const auto full = nn::unshuffle3d(sem_fc_(sem_in), {mdims[0], mdims[1], mdims[2]}, {2, 2, cfg_.full_z_up});
    r.semantic_logits = sem_head_(nn::relu(full));
    return r;
  }

  /// Everything up to the binary head; semantic_logits stays empty.
  ForwardResult forward_binary(const std::vector<float>& views, const CameraRig& rig) const {
    require(cfg_.strategy != Strategy::replacing, ErrorKind::mode_mismatch, "this strategy has no binary head");
    Tensor image;
    return trunk(views, rig, image);
  }

  /// Sparse stage: refines B' rows at `idx` and scatters them back to a
  /// [mid cells, C'] volume that is zero elsewhere.
  Tensor sparse_forward(const Tensor& mid, const std::vector<std::size_t>& idx, const Tensor& image,
                        const RigGeometry& geo) const {
    const auto mdims = cfg_.mid_dims();
    const auto nm = cells(mdims);
    const std::vector<std::size_t> md{mdims[0], mdims[1], mdims[2]};
    const auto query = nn::gather_rows(mid, idx);
    const auto refs = select_refs(mid_refs_, idx);
    const auto hits = select_queries(geo.mid_hits, idx);
    auto b = query;
    for (const auto& l : sparse_) {
      b = attend_block(b, query, nn::scatter_rows(b, idx, nm), l.mix, md, refs);
      if (l.cross) b = cross_block(b, *l.cross, image, in_.image_h / 4, in_.image_w / 4, hits);
      b = l.mlp(b);
    }
    return nn::scatter_rows(b, idx, nm);
  }

  /// Dense reference for the sparse stage: every mid voxel is a query and
  /// `volume` [mid cells, C'] is attended without scatter/gather.
  Tensor sparse_dense_reference(const Tensor& mid, const Tensor& volume, const Tensor& image,
                                const RigGeometry& geo) const {
    const auto mdims = cfg_.mid_dims();
    const std::vector<std::size_t> md{mdims[0], mdims[1], mdims[2]};
    auto b = volume;
    for (const auto& l : sparse_) {
      b = attend_block(b, mid, b, l.mix, md, mid_refs_);
      if (l.cross) b = cross_block(b, *l.cross, image, in_.image_h / 4, in_.image_w / 4, geo.mid_hits);
      b = l.mlp(b);
    }
    return b;
  }

  /// Voxels whose occupancy probability exceeds tau; the single
  /// highest-logit voxel when none does.
  std::vector<std::size_t> gather_predicted(const Tensor& binary_logits) const {
    const auto v = binary_logits.values();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (nn::detail::sigmoid(v[i]) > cfg_.tau) idx.push_back(i);
    if (idx.empty()) idx.push_back(argmax_first(v));
    return idx;
  }

  /// Mid voxels containing any ground-truth occupied voxel.
  std::vector<std::size_t> gather_from_gt(const BinaryGrid& gt, const Tensor& binary_logits) const {
    const auto coarse = downsample_any(gt, mid_spec());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < coarse.spec().count(); ++i)
      if (coarse.get(i)) idx.push_back(i);
    if (idx.empty()) idx.push_back(argmax_first(binary_logits.values()));
    return idx;
  }

  /// Onboard: argmax over free + K classes. Offboard: voxels outside the
  /// ground-truth binary grid are free, the rest take the best of classes 1..K.
  SemanticGrid decode(const ForwardResult& r, Mode mode, const BinaryGrid* gt = nullptr) const {
    const std::size_t k1 = in_.num_classes + 1u;
    const auto v = r.semantic_logits.values();
    SemanticGrid out(in_.grid, in_.num_classes);
    if (mode == Mode::offboard)
      require(gt != nullptr && gt->spec() == in_.grid, ErrorKind::missing_gt_binary,
              "offboard decoding needs the ground-truth binary grid");
    for (std::size_t i = 0; i < in_.grid.count(); ++i) {
      const double* row = v.data() + i * k1;
      std::size_t best = 0;
      if (mode == Mode::onboard) {
        for (std::size_t c = 1; c < k1; ++c)
          if (row[c] > row[best]) best = c;
      } else if (gt->get(i)) {
        best = 1;
        for (std::size_t c = 2; c < k1; ++c)
          if (row[c] > row[best]) best = c;
      }
      out.set(i, static_cast<std::uint8_t>(best));
    }
    return out;
  }

  /// Binary prediction of the B' head on the mid grid.
  BinaryGrid decode_binary(const ForwardResult& r) const {
    require(r.binary_logits.defined(), ErrorKind::mode_mismatch, "this strategy has no binary head");
    BinaryGrid out(mid_spec());
    const auto v = r.binary_logits.values();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (nn::detail::sigmoid(v[i]) > cfg_.tau) out.set(i);
    return out;
  }

  const RigGeometry& geometry(const CameraRig& rig) const {
    if (!geo_ || geo_->first != rig) geo_.emplace(rig, build_geometry(rig));
    return geo_->second;
  }

 private:
  struct DenseLayer {
    DeformAttn self, cross;
    Mlp mlp;
  };
  struct SparseLayer {
    DeformAttn mix;
    std::optional<DeformAttn> cross;
    Mlp mlp;
  };

  ForwardResult trunk(const std::vector<float>& views, const CameraRig& rig, Tensor& image) const {
    require(rig.size() == in_.cameras, ErrorKind::shape_mismatch, "model: camera count");
    const auto& geo = geometry(rig);
    const std::size_t fh = in_.image_h / 4, fw = in_.image_w / 4;
    const auto cdims = cfg_.compact_dims();
    ForwardResult r;
    image = encode(views);
    Tensor x;
    if (cfg_.transform == Transform::lift_splat) {
      const auto probs = nn::softmax(depth_(image), 1);
      x = nn::splat(probs, context_(image), geo.splat_target, cells(cdims));
    } else {
      x = queries_;
    }
    const std::vector<std::size_t> cd{cdims[0], cdims[1], cdims[2]};
    for (const auto& l : dense_) {
      x = attend_block(x, x, x, l.self, cd, compact_refs_);
      x = cross_block(x, l.cross, image, fh, fw, geo.compact_hits);
      x = l.mlp(x);
    }
    r.compact = x;
    r.mid = nn::unshuffle3d(binary_up_(x), {cdims[0], cdims[1], cdims[2]}, {2, 2, cfg_.mid_z_up});
    if (cfg_.strategy != Strategy::replacing) r.binary_logits = binary_head_(r.mid);
    return r;
  }

  static std::size_t cells(const std::array<std::uint32_t, 3>& d) {
    return static_cast<std::size_t>(d[0]) * d[1] * d[2];
  }

  static std::size_t argmax_first(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[best]) best = i;
    return best;
  }

  /// Grid spec with coarser dims over the same box; only dims and origin
  /// are meaningful since the cells need not be cubic.
  GridSpec coarse_spec(const std::array<std::uint32_t, 3>& d) const {
    GridSpec s = in_.grid;
    s.dims_h = d[0];
    s.dims_w = d[1];
    s.dims_z = d[2];
    s.voxel_size = in_.grid.voxel_size * static_cast<float>(in_.grid.dims_h / d[0]);
    return s;
  }

  RigGeometry build_geometry(const CameraRig& rig) const {
    RigGeometry g;
    const std::size_t fh = in_.image_h / 4, fw = in_.image_w / 4;
    const auto cdims = cfg_.compact_dims();
    if (cfg_.transform == Transform::lift_splat) {
      const double step = (cfg_.depth_max - cfg_.depth_min) / cfg_.depth_bins;
      for (const auto& cam : rig)
        for (std::size_t i = 0; i < fh; ++i)
          for (std::size_t j = 0; j < fw; ++j) {
            const double u = (j + 0.5) * cam.width / static_cast<double>(fw);
            const double v = (i + 0.5) * cam.height / static_cast<double>(fh);
            for (std::uint32_t k = 0; k < cfg_.depth_bins; ++k)
              g.splat_target.push_back(
                  volume_cell(in_.grid, cdims, back_project(cam, u, v, cfg_.depth_min + (k + 0.5) * step)));
          }
    }
    g.compact_hits = project_queries(rig, volume_centers(in_.grid, cdims));
    g.mid_hits = project_queries(rig, volume_centers(in_.grid, cfg_.mid_dims()));
    return g;
  }

  ModelConfig cfg_;
  InputSpec in_;
  nn::ParamStore ps_;
  Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  Linear depth_, context_;
  Tensor queries_;
  std::vector<DenseLayer> dense_;
  Linear binary_up_, binary_head_;
  std::vector<SparseLayer> sparse_;
  Linear sem_fc_, sem_head_;
  std::vector<double> compact_refs_ = volume_refs(cfg_.compact_dims());
  std::vector<double> mid_refs_ = volume_refs(cfg_.mid_dims());
  mutable std::optional<std::pair<CameraRig, RigGeometry>> geo_;
};

}  // namespace b2s::model
