#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "b2s/common/error.hpp"

namespace b2s {

struct VoxelCoord {
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t z = 0;
  bool operator==(const VoxelCoord&) const = default;
};

/// Geometry of a dense voxel grid in the ego frame.
///
/// Geometry fields are stored at single precision because that is what the
/// grid file carries; this keeps save/load bit-exact.
struct GridSpec {
  std::uint32_t dims_h = 0;
  std::uint32_t dims_w = 0;
  std::uint32_t dims_z = 0;
  float voxel_size = 0.0f;
  std::array<float, 3> origin{};  // min corner of voxel (0,0,0), meters

  bool operator==(const GridSpec&) const = default;

  void validate() const {
    require(dims_h > 0 && dims_w > 0 && dims_z > 0, ErrorKind::invalid_argument,
            "grid dims must be positive");
    require(voxel_size > 0.0f && std::isfinite(voxel_size), ErrorKind::invalid_argument,
            "voxel_size must be positive");
  }

  std::size_t count() const {
    return static_cast<std::size_t>(dims_h) * dims_w * dims_z;
  }

  /// Shared linear order: i = (h*W + w)*Z + z.
  std::size_t index(std::uint32_t h, std::uint32_t w, std::uint32_t z) const {
    return (static_cast<std::size_t>(h) * dims_w + w) * dims_z + z;
  }
  std::size_t index(VoxelCoord c) const { return index(c.h, c.w, c.z); }

  VoxelCoord coord(std::size_t i) const {
    VoxelCoord c;
    c.z = static_cast<std::uint32_t>(i % dims_z);
    i /= dims_z;
    c.w = static_cast<std::uint32_t>(i % dims_w);
    c.h = static_cast<std::uint32_t>(i / dims_w);
    return c;
  }

  /// h runs along ego x, w along ego y, z along ego z.
  std::array<double, 3> center(VoxelCoord c) const {
    const double s = voxel_size;
    return {origin[0] + (c.h + 0.5) * s, origin[1] + (c.w + 0.5) * s, origin[2] + (c.z + 0.5) * s};
  }

  std::array<double, 3> extent_max() const {
    const double s = voxel_size;
    return {origin[0] + dims_h * s, origin[1] + dims_w * s, origin[2] + dims_z * s};
  }

  /// Voxel containing an ego-frame point, if inside the grid.
  std::optional<VoxelCoord> locate(const std::array<double, 3>& p) const {
    const std::array<std::uint32_t, 3> dims{dims_h, dims_w, dims_z};
    VoxelCoord c;
    std::array<std::uint32_t*, 3> out{&c.h, &c.w, &c.z};
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor((p[a] - origin[a]) / voxel_size);
      if (!(f >= 0.0) || f >= dims[a]) return std::nullopt;
      *out[a] = static_cast<std::uint32_t>(f);
    }
    return c;
  }
};

/// Y^b: packed occupancy bits in linear-index order, LSB-first within a byte.
class BinaryGrid {
 public:
  BinaryGrid() = default;
  explicit BinaryGrid(const GridSpec& spec) : spec_(spec) {
    spec.validate();
    bits_.assign((spec.count() + 7) / 8, 0);
  }

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return spec_.count(); }

  bool get(std::size_t i) const { return (bits_[i >> 3] >> (i & 7)) & 1u; }
  bool get(VoxelCoord c) const { return get(spec_.index(c)); }
  void set(std::size_t i, bool v = true) {
    const auto mask = static_cast<std::uint8_t>(1u << (i & 7));
    if (v)
      bits_[i >> 3] |= mask;
    else
      bits_[i >> 3] &= static_cast<std::uint8_t>(~mask);
  }
  void set(VoxelCoord c, bool v = true) { set(spec_.index(c), v); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += static_cast<std::size_t>(std::popcount(b));
    return n;
  }

  std::span<const std::uint8_t> packed() const { return bits_; }
  std::span<std::uint8_t> packed_mut() { return bits_; }

  BinaryGrid& operator|=(const BinaryGrid& o) {
    require(spec_ == o.spec_, ErrorKind::spec_mismatch, "grid spec mismatch");
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= o.bits_[i];
    return *this;
  }

  bool operator==(const BinaryGrid&) const = default;

 private:
  GridSpec spec_{};
  std::vector<std::uint8_t> bits_;
};

/// Y^s: one label per voxel in {0..K}; label 0 is free.
class SemanticGrid {
 public:
  SemanticGrid() = default;
  SemanticGrid(const GridSpec& spec, std::uint8_t num_classes)
      : spec_(spec), num_classes_(num_classes) {
    spec.validate();
    labels_.assign(spec.count(), 0);
  }
  SemanticGrid(const GridSpec& spec, std::uint8_t num_classes, std::vector<std::uint8_t> labels)
      : spec_(spec), num_classes_(num_classes), labels_(std::move(labels)) {
    spec.validate();
    require(labels_.size() == spec.count(), ErrorKind::shape_mismatch,
            "label count does not match grid spec");
    for (auto l : labels_)
      require(l <= num_classes_, ErrorKind::label_out_of_range,
              "label " + std::to_string(l) + " exceeds K=" + std::to_string(num_classes_));
  }

  const GridSpec& spec() const { return spec_; }
  /// K, the number of non-free classes.
  std::uint8_t num_classes() const { return num_classes_; }
  std::size_t size() const { return labels_.size(); }

  std::uint8_t at(std::size_t i) const { return labels_[i]; }
  std::uint8_t at(VoxelCoord c) const { return labels_[spec_.index(c)]; }
  void set(std::size_t i, std::uint8_t label) {
    require(label <= num_classes_, ErrorKind::label_out_of_range,
            "label " + std::to_string(label) + " exceeds K=" + std::to_string(num_classes_));
    labels_[i] = label;
  }
  void set(VoxelCoord c, std::uint8_t label) { set(spec_.index(c), label); }

  std::span<const std::uint8_t> labels() const { return labels_; }

  bool operator==(const SemanticGrid&) const = default;

 private:
  GridSpec spec_{};
  std::uint8_t num_classes_ = 0;
  std::vector<std::uint8_t> labels_;
};

inline BinaryGrid binary_from_semantic(const SemanticGrid& sem) {
  BinaryGrid out(sem.spec());
  const auto labels = sem.labels();
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0) out.set(i);
  return out;
}

/// Any-occupied pooling onto a coarser grid whose dims divide this one's.
inline BinaryGrid downsample_any(const BinaryGrid& g, const GridSpec& coarse) {
  const auto& fine = g.spec();
  require(coarse.dims_h > 0 && coarse.dims_w > 0 && coarse.dims_z > 0 &&
              fine.dims_h % coarse.dims_h == 0 && fine.dims_w % coarse.dims_w == 0 &&
              fine.dims_z % coarse.dims_z == 0,
          ErrorKind::spec_mismatch, "coarse grid dims must divide fine grid dims");
  const auto fh = fine.dims_h / coarse.dims_h;
  const auto fw = fine.dims_w / coarse.dims_w;
  const auto fz = fine.dims_z / coarse.dims_z;
  BinaryGrid out(coarse);
  for (std::size_t i = 0; i < fine.count(); ++i) {
    if (!g.get(i)) continue;
    const auto c = fine.coord(i);
    out.set(coarse.index(c.h / fh, c.w / fw, c.z / fz));
  }
  return out;
}

/// Gathers the values at mask positions in linear-index order.
template <class T>
std::vector<T> gather_masked(std::span<const T> values, const BinaryGrid& mask) {
  std::vector<T> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.get(i)) out.push_back(values[i]);
  return out;
}

/// Inverse of gather_masked; positions outside the mask receive `fill`.
template <class T>
std::vector<T> scatter_masked(std::span<const T> packed, const BinaryGrid& mask, T fill = T{}) {
  std::vector<T> out(mask.size(), fill);
  std::size_t k = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.get(i)) {
      require(k < packed.size(), ErrorKind::shape_mismatch, "too few packed values for mask");
      out[i] = packed[k++];
    }
  require(k == packed.size(), ErrorKind::shape_mismatch, "too many packed values for mask");
  return out;
}

}  // namespace b2s
