#pragma once

// Pseudo-label files.
//
//   "B2SP" | version u16 | mode u8 | GridSpec (28 bytes) | K u8 | payload
//
// Top1 payload: run count u32, then (count u32, label u8) runs over the
// linear-index label stream. Top2 payload: per voxel (class u8, code u16)
// twice, best first; code 32768 + round(l / step) with l clamped to
// +-kLogitClamp.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "b2s/common/binary_io.hpp"
#include "b2s/nn/losses.hpp"
#include "b2s/voxel/grid_io.hpp"

namespace b2s::autolabel {

inline constexpr std::string_view kPseudoMagic = "B2SP";
inline constexpr std::uint16_t kPseudoVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 28 + 1;

enum class LabelMode : std::uint8_t { top1 = 1, top2 = 2 };

inline std::string_view to_string(LabelMode m) { return m == LabelMode::top1 ? "Top1" : "Top2"; }
inline LabelMode parse_label_mode(std::string_view s) {
  if (s == "Top1" || s == "top1") return LabelMode::top1;
  if (s == "Top2" || s == "top2") return LabelMode::top2;
  fail(ErrorKind::config, "unknown pseudo-label mode '" + std::string(s) + "' (Top1 | Top2)");
}

// ------------------------------------------------------------ quantizer

// Half a step is 3.0488e-4. Codes 1..65535 cover [-kLogitClamp, kLogitClamp]
// and logit 0 maps to code 32768.
inline constexpr double kLogitClamp = 19.98;
inline constexpr double kLogitStep = kLogitClamp / 32767.0;

inline std::uint16_t quantize_logit(double l) {
  require(std::isfinite(l), ErrorKind::non_finite, "top2: non-finite logit");
  const double c = std::clamp(l, -kLogitClamp, kLogitClamp);
  return static_cast<std::uint16_t>(32768 + std::lround(c / kLogitStep));
}

inline double dequantize_logit(std::uint16_t code) {
  return static_cast<double>(static_cast<int>(code) - 32768) * kLogitStep;
}

// ------------------------------------------------------------ records

struct Top2Entry {
  std::uint8_t c1 = 0;
  double l1 = 0.0;
  std::uint8_t c2 = 1;
  double l2 = 0.0;
  bool operator==(const Top2Entry&) const = default;
};

/// The two largest logits of a K+1 row; ties keep the lower class first.
inline Top2Entry top2_of(std::span<const double> row) {
  require(row.size() >= 2, ErrorKind::invalid_argument, "top2 needs at least two classes");
  std::size_t a = 0, b = 1;
  if (row[1] > row[0]) std::swap(a, b);
  for (std::size_t j = 2; j < row.size(); ++j) {
    if (row[j] > row[a]) {
      b = a;
      a = j;
    } else if (row[j] > row[b]) {
      b = j;
    }
  }
  return {static_cast<std::uint8_t>(a), row[a], static_cast<std::uint8_t>(b), row[b]};
}

/// Record for a voxel outside the ground-truth binary grid: free at the
/// clamp ceiling, then the best occupied class at the floor.
inline Top2Entry top2_outside(std::span<const double> row) {
  std::size_t best = 1;
  for (std::size_t j = 2; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return {0, kLogitClamp, static_cast<std::uint8_t>(best), -kLogitClamp};
}

/// Renormalized two-class softmax of the stored logits.
inline nn::SoftPair soft_target(const Top2Entry& e) {
  const double q1 = 1.0 / (1.0 + std::exp(e.l2 - e.l1));
  return {e.c1, q1, e.c2, 1.0 - q1};
}

struct Top2Grid {
  GridSpec spec;
  std::uint8_t num_classes = 0;
  std::vector<Top2Entry> entries;
};

// ------------------------------------------------------------ files

namespace detail {

inline void write_header(io::ByteWriter& w, LabelMode mode, const GridSpec& spec, std::uint8_t k) {
  w.magic(kPseudoMagic);
  w.u16(kPseudoVersion);
  w.u8(static_cast<std::uint8_t>(mode));
  b2s::detail::write_spec(w, spec);
  w.u8(k);
}

struct Header {
  LabelMode mode;
  GridSpec spec;
  std::uint8_t num_classes;
};

inline Header read_header(io::ByteReader& r) {
  r.expect_magic(kPseudoMagic);
  const auto version = r.u16();
  require(version == kPseudoVersion, ErrorKind::version_mismatch,
          "pseudo-label file version " + std::to_string(version));
  const auto mode = r.u8();
  require(mode == 1 || mode == 2, ErrorKind::invalid_argument, "unknown pseudo-label mode " + std::to_string(mode));
  Header h{static_cast<LabelMode>(mode), b2s::detail::read_spec(r), 0};
  h.num_classes = r.u8();
  return h;
}

}  // namespace detail

inline io::Bytes encode_top1(const SemanticGrid& g) {
  io::ByteWriter runs;
  std::uint32_t n_runs = 0;
  const auto labels = g.labels();
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i] && j - i < std::numeric_limits<std::uint32_t>::max()) ++j;
    runs.u32(static_cast<std::uint32_t>(j - i));
    runs.u8(labels[i]);
    ++n_runs;
    i = j;
  }
  io::ByteWriter w;
  detail::write_header(w, LabelMode::top1, g.spec(), g.num_classes());
  w.u32(n_runs);
  w.bytes(runs.data());
  return std::move(w).take();
}

inline SemanticGrid decode_top1_payload(io::ByteReader& r, const GridSpec& spec, std::uint8_t k) {
  const auto n_runs = r.u32();
  const auto n = spec.count();
  std::vector<std::uint8_t> labels;
  labels.reserve(n);
  for (std::uint32_t i = 0; i < n_runs; ++i) {
    const auto count = r.u32();
    const auto label = r.u8();
    require(count > 0, ErrorKind::run_overflow, "top1: empty run");
    require(count <= n - labels.size(), ErrorKind::run_overflow, "top1: runs exceed the voxel count");
    require(label <= k, ErrorKind::label_out_of_range, "top1: label " + std::to_string(label));
    labels.insert(labels.end(), count, label);
  }
  require(labels.size() == n, ErrorKind::truncated, "top1: runs cover " + std::to_string(labels.size()) + " of " +
                                                        std::to_string(n) + " voxels");
  require(r.at_end(), ErrorKind::invalid_argument, "top1: trailing bytes");
  return SemanticGrid(spec, k, std::move(labels));
}

inline SemanticGrid decode_top1(std::span<const std::uint8_t> data) {
  io::ByteReader r(data);
  const auto h = detail::read_header(r);
  require(h.mode == LabelMode::top1, ErrorKind::mode_mismatch, "expected a Top1 pseudo-label file");
  return decode_top1_payload(r, h.spec, h.num_classes);
}

inline io::Bytes encode_top2(const Top2Grid& g) {
  require(g.entries.size() == g.spec.count(), ErrorKind::shape_mismatch, "top2: entry count vs grid");
  io::ByteWriter w;
  detail::write_header(w, LabelMode::top2, g.spec, g.num_classes);
  for (const auto& e : g.entries) {
    require(e.c1 != e.c2, ErrorKind::invalid_argument, "top2: classes must be distinct");
    require(e.c1 <= g.num_classes && e.c2 <= g.num_classes, ErrorKind::label_out_of_range, "top2: class index");
    w.u8(e.c1);
    w.u16(quantize_logit(e.l1));
    w.u8(e.c2);
    w.u16(quantize_logit(e.l2));
  }
  return std::move(w).take();
}

inline Top2Grid decode_top2_payload(io::ByteReader& r, const GridSpec& spec, std::uint8_t k) {
  Top2Grid g{spec, k, {}};
  g.entries.resize(spec.count());
  for (auto& e : g.entries) {
    e.c1 = r.u8();
    e.l1 = dequantize_logit(r.u16());
    e.c2 = r.u8();
    e.l2 = dequantize_logit(r.u16());
    require(e.c1 != e.c2, ErrorKind::invalid_argument, "top2: repeated class");
    require(e.c1 <= k && e.c2 <= k, ErrorKind::label_out_of_range, "top2: class index");
  }
  require(r.at_end(), ErrorKind::invalid_argument, "top2: trailing bytes");
  return g;
}

inline Top2Grid decode_top2(std::span<const std::uint8_t> data) {
  io::ByteReader r(data);
  const auto h = detail::read_header(r);
  require(h.mode == LabelMode::top2, ErrorKind::mode_mismatch, "expected a Top2 pseudo-label file");
  return decode_top2_payload(r, h.spec, h.num_classes);
}

inline LabelMode file_mode(std::span<const std::uint8_t> data) {
  io::ByteReader r(data);
  return detail::read_header(r).mode;
}

}  // namespace b2s::autolabel
