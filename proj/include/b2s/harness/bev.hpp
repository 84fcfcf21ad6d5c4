#pragma once

// Top-down images of voxel grids. Binary grids become 8-bit graymaps (P5),
// semantic grids become RGB pixmaps (P6). Image row r is grid row h = r and
// image column c is grid column w = c.

#include <array>
#include <cctype>
#include <optional>

#include "b2s/common/kv.hpp"
#include "b2s/voxel/grid_io.hpp"

namespace b2s::harness {

/// Label 0 (free) is the black background; labels 1.. cycle through the
/// remaining entries.
inline constexpr std::array<std::array<std::uint8_t, 3>, 12> kPalette{{
    {0, 0, 0},
    {230, 25, 75},
    {60, 180, 75},
    {255, 225, 25},
    {0, 130, 200},
    {245, 130, 48},
    {145, 30, 180},
    {70, 240, 240},
    {240, 50, 230},
    {210, 245, 60},
    {250, 190, 212},
    {0, 128, 128},
}};

inline std::array<std::uint8_t, 3> palette_color(std::uint8_t label) {
  if (label == 0) return kPalette[0];
  return kPalette[1 + (label - 1) % (kPalette.size() - 1)];
}

inline constexpr std::uint8_t kOccupiedGray = 255;

struct Image {
  std::uint32_t width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved channels

  std::span<const std::uint8_t> pixel(std::uint32_t row, std::uint32_t col) const {
    return std::span(pixels).subspan((static_cast<std::size_t>(row) * width + col) * channels, channels);
  }
};

/// `slice` selects one z level; none means max over z (any occupied voxel
/// for binary grids, the largest label for semantic grids).
inline Image bev_image(const BinaryGrid& g, std::optional<std::uint32_t> slice = std::nullopt) {
  const auto& s = g.spec();
  require(!slice || *slice < s.dims_z, ErrorKind::invalid_argument,
          "z slice " + std::to_string(slice.value_or(0)) + " outside 0.." + std::to_string(s.dims_z - 1));
  Image img{s.dims_w, s.dims_h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(s.dims_h) * s.dims_w, 0)};
  for (std::uint32_t h = 0; h < s.dims_h; ++h)
    for (std::uint32_t w = 0; w < s.dims_w; ++w) {
      bool occ = false;
      for (std::uint32_t z = slice.value_or(0); z < (slice ? *slice + 1 : s.dims_z); ++z) occ = occ || g.get({h, w, z});
      img.pixels[static_cast<std::size_t>(h) * s.dims_w + w] = occ ? kOccupiedGray : 0;
    }
  return img;
}

inline Image bev_image(const SemanticGrid& g, std::optional<std::uint32_t> slice = std::nullopt) {
  const auto& s = g.spec();
  require(!slice || *slice < s.dims_z, ErrorKind::invalid_argument,
          "z slice " + std::to_string(slice.value_or(0)) + " outside 0.." + std::to_string(s.dims_z - 1));
  Image img{s.dims_w, s.dims_h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(s.dims_h) * s.dims_w * 3, 0)};
  for (std::uint32_t h = 0; h < s.dims_h; ++h)
    for (std::uint32_t w = 0; w < s.dims_w; ++w) {
      std::uint8_t label = 0;
      for (std::uint32_t z = slice.value_or(0); z < (slice ? *slice + 1 : s.dims_z); ++z)
        label = std::max(label, g.at(VoxelCoord{h, w, z}));
      const auto c = palette_color(label);
      std::copy(c.begin(), c.end(), img.pixels.begin() + (static_cast<std::ptrdiff_t>(h) * s.dims_w + w) * 3);
    }
  return img;
}

/// Binary netpbm: P5 for one channel, P6 for three, maxval 255.
inline io::Bytes encode_netpbm(const Image& img) {
  require(img.channels == 1 || img.channels == 3, ErrorKind::invalid_argument, "netpbm needs 1 or 3 channels");
  const auto header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
  io::Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline Image decode_netpbm(std::span<const std::uint8_t> data) {
  std::size_t pos = 0;
  auto token = [&] {
    while (pos < data.size() && std::isspace(data[pos])) ++pos;
    std::string t;
    while (pos < data.size() && !std::isspace(data[pos])) t += static_cast<char>(data[pos++]);
    require(!t.empty(), ErrorKind::truncated, "netpbm header ended early");
    return t;
  };
  const auto magic = token();
  require(magic == "P5" || magic == "P6", ErrorKind::bad_magic, "not a binary graymap or pixmap: " + magic);
  Image img;
  img.channels = magic == "P5" ? 1 : 3;
  img.width = kv::to_int<std::uint32_t>(token(), "netpbm width");
  img.height = kv::to_int<std::uint32_t>(token(), "netpbm height");
  require(token() == "255", ErrorKind::invalid_argument, "netpbm maxval must be 255");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  require(data.size() >= pos + n, ErrorKind::truncated, "netpbm raster is short");
  img.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos), data.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline Image bev_image(const AnyGrid& g, std::optional<std::uint32_t> slice = std::nullopt) {
  return std::visit([&](const auto& grid) { return bev_image(grid, slice); }, g);
}

}  // namespace b2s::harness
