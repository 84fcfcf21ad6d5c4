#pragma once

#include <cmath>
#include <vector>

#include "b2s/model/model.hpp"
#include "b2s/voxel/metrics.hpp"

namespace b2s::train {

/// Dataset-level scores: one confusion table summed over all scenes, and the
/// binary decoder's IoU on the mid grid against any-occupied pooled GT.
struct EvalResult {
  ConfusionTable confusion{0};
  SemanticScores scores;
  double binary_iou = NAN;  // NaN when the strategy has no binary head
  std::size_t scenes = 0;
};

inline std::vector<std::size_t> occupied_rows(const BinaryGrid& g) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < g.spec().count(); ++i)
    if (g.get(i)) rows.push_back(i);
  return rows;
}

struct IouCounter {
  std::uint64_t inter = 0, uni = 0;
  void add(const BinaryGrid& pred, const BinaryGrid& gt) {
    for (std::size_t i = 0; i < gt.spec().count(); ++i) {
      const bool p = pred.get(i), g = gt.get(i);
      inter += p && g;
      uni += p || g;
    }
  }
  double value() const { return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni); }
};

/// `semantic` false skips the semantic branch (binary pretraining).
inline EvalResult evaluate(const model::Model& m, const std::vector<const Scene*>& scenes, model::Mode mode,
                           bool semantic = true) {
  require(!scenes.empty(), ErrorKind::dataset_empty, "evaluate: no scenes");
  nn::NoGradGuard ng;
  EvalResult r;
  r.confusion = ConfusionTable(m.input().num_classes);
  const bool has_binary = m.config().strategy != model::Strategy::replacing;
  IouCounter iou;
  for (const Scene* s : scenes) {
    if (semantic)
      require(s->has_semantic, ErrorKind::invalid_argument, "evaluate: scene without semantic labels");
    const auto out = semantic ? m.forward(s->views, s->rig, mode, &s->binary) : m.forward_binary(s->views, s->rig);
    if (semantic) r.confusion.accumulate(m.decode(out, mode, &s->binary), s->semantic);
    if (has_binary) iou.add(m.decode_binary(out), downsample_any(s->binary, m.mid_spec()));
    ++r.scenes;
  }
  if (semantic) r.scores = scores_from_confusion(r.confusion);
  if (has_binary) r.binary_iou = iou.value();
  return r;
}

}  // namespace b2s::train
