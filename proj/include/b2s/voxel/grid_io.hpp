#pragma once

// Grid file layout (little-endian):
//   "B2SO" | version u16 | kind u8 (0 binary, 1 semantic) | H, W, Z u32
//   | voxel_size f32 | origin 3 x f32 | payload
// Binary payload is packed bits in linear-index order, LSB-first per byte.
// Semantic payload is one u8 label per voxel in linear-index order.

#include <filesystem>
#include <variant>

#include "b2s/common/binary_io.hpp"
#include "b2s/voxel/grid.hpp"

namespace b2s {

inline constexpr std::string_view kGridMagic = "B2SO";
inline constexpr std::uint16_t kGridVersion = 1;

enum class GridKind : std::uint8_t { binary = 0, semantic = 1 };

using AnyGrid = std::variant<BinaryGrid, SemanticGrid>;

namespace detail {

inline void write_spec(io::ByteWriter& w, const GridSpec& s) {
  w.u32(s.dims_h);
  w.u32(s.dims_w);
  w.u32(s.dims_z);
  w.f32(s.voxel_size);
  for (float o : s.origin) w.f32(o);
}

inline GridSpec read_spec(io::ByteReader& r) {
  GridSpec s;
  s.dims_h = r.u32();
  s.dims_w = r.u32();
  s.dims_z = r.u32();
  s.voxel_size = r.f32();
  for (float& o : s.origin) o = r.f32();
  s.validate();
  return s;
}

}  // namespace detail

inline io::Bytes encode_grid(const BinaryGrid& g) {
  io::ByteWriter w;
  w.magic(kGridMagic);
  w.u16(kGridVersion);
  w.u8(static_cast<std::uint8_t>(GridKind::binary));
  detail::write_spec(w, g.spec());
  w.bytes(g.packed());
  return std::move(w).take();
}

inline io::Bytes encode_grid(const SemanticGrid& g) {
  io::ByteWriter w;
  w.magic(kGridMagic);
  w.u16(kGridVersion);
  w.u8(static_cast<std::uint8_t>(GridKind::semantic));
  detail::write_spec(w, g.spec());
  w.bytes(g.labels());
  return std::move(w).take();
}

/// Semantic payloads do not carry K, so the caller supplies it.
inline AnyGrid decode_grid(std::span<const std::uint8_t> data, std::uint8_t num_classes = 255) {
  io::ByteReader r(data);
  r.expect_magic(kGridMagic);
  const auto version = r.u16();
  if (version != kGridVersion)
    fail(ErrorKind::version_mismatch, "grid file version " + std::to_string(version) +
                                          ", expected " + std::to_string(kGridVersion));
  const auto kind = r.u8();
  const auto spec = detail::read_spec(r);
  if (kind == static_cast<std::uint8_t>(GridKind::binary)) {
    const auto payload = r.bytes((spec.count() + 7) / 8);
    BinaryGrid g(spec);
    std::copy(payload.begin(), payload.end(), g.packed_mut().begin());
    // Clear padding bits so equality stays bitwise on the meaningful prefix.
    if (const auto tail = spec.count() % 8; tail != 0)
      g.packed_mut().back() &= static_cast<std::uint8_t>((1u << tail) - 1u);
    require(r.at_end(), ErrorKind::invalid_argument, "trailing bytes after grid payload");
    return g;
  }
  if (kind == static_cast<std::uint8_t>(GridKind::semantic)) {
    const auto payload = r.bytes(spec.count());
    require(r.at_end(), ErrorKind::invalid_argument, "trailing bytes after grid payload");
    return SemanticGrid(spec, num_classes, std::vector<std::uint8_t>(payload.begin(), payload.end()));
  }
  fail(ErrorKind::invalid_argument, "unknown grid kind " + std::to_string(kind));
}

template <class Grid>
void save_grid(const Grid& g, const std::filesystem::path& path) {
  io::write_file(path, encode_grid(g));
}

inline AnyGrid load_grid(const std::filesystem::path& path, std::uint8_t num_classes = 255) {
  return decode_grid(io::read_file(path), num_classes);
}

inline BinaryGrid load_binary_grid(const std::filesystem::path& path) {
  auto g = load_grid(path);
  if (auto* b = std::get_if<BinaryGrid>(&g)) return std::move(*b);
  fail(ErrorKind::invalid_argument, path.string() + " holds a semantic grid, expected binary");
}

inline SemanticGrid load_semantic_grid(const std::filesystem::path& path, std::uint8_t num_classes) {
  auto g = load_grid(path, num_classes);
  if (auto* s = std::get_if<SemanticGrid>(&g)) return std::move(*s);
  fail(ErrorKind::invalid_argument, path.string() + " holds a binary grid, expected semantic");
}

}  // namespace b2s
