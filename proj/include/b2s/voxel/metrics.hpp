#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "b2s/voxel/grid.hpp"

namespace b2s {

/// Occupied-geometry IoU. Two empty grids agree, so their IoU is 1.
inline double grid_iou(const BinaryGrid& a, const BinaryGrid& b) {
  require(a.spec() == b.spec(), ErrorKind::spec_mismatch, "grid_iou: spec mismatch");
  std::size_t inter = 0, uni = 0;
  const auto pa = a.packed(), pb = b.packed();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    inter += static_cast<std::size_t>(std::popcount(static_cast<std::uint8_t>(pa[i] & pb[i])));
    uni += static_cast<std::size_t>(std::popcount(static_cast<std::uint8_t>(pa[i] | pb[i])));
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// (K+1)x(K+1) voxel counts; rows are ground truth, columns are predictions.
class ConfusionTable {
 public:
  explicit ConfusionTable(std::uint8_t num_classes)
      : k_(num_classes), counts_(static_cast<std::size_t>(num_classes + 1) * (num_classes + 1), 0) {}

  std::uint8_t num_classes() const { return k_; }
  std::uint64_t at(std::uint8_t gt, std::uint8_t pred) const { return counts_[slot(gt, pred)]; }
  void add(std::uint8_t gt, std::uint8_t pred, std::uint64_t n = 1) { counts_[slot(gt, pred)] += n; }

  void accumulate(const SemanticGrid& pred, const SemanticGrid& gt) {
    require(pred.spec() == gt.spec(), ErrorKind::spec_mismatch, "confusion: spec mismatch");
    require(pred.num_classes() == k_ && gt.num_classes() == k_, ErrorKind::spec_mismatch,
            "confusion: K mismatch");
    const auto p = pred.labels(), g = gt.labels();
    for (std::size_t i = 0; i < p.size(); ++i) ++counts_[slot(g[i], p[i])];
  }

  ConfusionTable& operator+=(const ConfusionTable& o) {
    require(o.k_ == k_, ErrorKind::spec_mismatch, "confusion: K mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  bool operator==(const ConfusionTable&) const = default;

 private:
  std::size_t slot(std::uint8_t gt, std::uint8_t pred) const {
    require(gt <= k_ && pred <= k_, ErrorKind::label_out_of_range, "confusion: label exceeds K");
    return static_cast<std::size_t>(gt) * (k_ + 1) + pred;
  }

  std::uint8_t k_;
  std::vector<std::uint64_t> counts_;
};

struct SemanticScores {
  /// IoU for classes 1..K; nullopt when the class is absent from both sides.
  std::vector<std::optional<double>> per_class;
  double miou = 0.0;
  double binary_iou = 0.0;
};

inline SemanticScores scores_from_confusion(const ConfusionTable& t) {
  const auto k = t.num_classes();
  SemanticScores s;
  s.per_class.resize(k);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::uint8_t c = 1; c <= k; ++c) {
    std::uint64_t tp = t.at(c, c), fp = 0, fn = 0;
    for (std::uint8_t o = 0; o <= k; ++o) {
      if (o == c) continue;
      fp += t.at(o, c);
      fn += t.at(c, o);
    }
    const auto denom = tp + fp + fn;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    s.per_class[c - 1] = iou;
    sum += iou;
    ++present;
  }
  // No class present anywhere: prediction and truth agree on "all free".
  s.miou = present == 0 ? 1.0 : sum / static_cast<double>(present);

  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::uint8_t g = 0; g <= k; ++g)
    for (std::uint8_t p = 0; p <= k; ++p) {
      const auto n = t.at(g, p);
      if (g != 0 && p != 0) tp += n;
      else if (g == 0 && p != 0) fp += n;
      else if (g != 0 && p == 0) fn += n;
    }
  const auto denom = tp + fp + fn;
  s.binary_iou = denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
  return s;
}

inline SemanticScores semantic_scores(const SemanticGrid& pred, const SemanticGrid& gt) {
  require(pred.num_classes() == gt.num_classes(), ErrorKind::spec_mismatch,
          "semantic_scores: K mismatch");
  ConfusionTable t(gt.num_classes());
  t.accumulate(pred, gt);
  return scores_from_confusion(t);
}

}  // namespace b2s
