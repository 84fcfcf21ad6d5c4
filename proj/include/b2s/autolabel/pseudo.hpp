#pragma once

#include <set>

#include "b2s/autolabel/codec.hpp"
#include "b2s/train/trainer.hpp"

namespace b2s::autolabel {

using model::Mode;
using model::Model;

/// Offboard forward on one scene, stored as a pseudo-label file.
inline io::Bytes generate_pseudo_labels(const Model& offboard, const Scene& s, LabelMode mode) {
  require(offboard.config().strategy == model::Strategy::intermediate, ErrorKind::mode_mismatch,
          "pseudo-labels need an intermediate-strategy offboard model");
  require(s.binary.spec() == offboard.input().grid, ErrorKind::spec_mismatch, "pseudo-labels: scene grid");
  nn::NoGradGuard ng;
  const auto r = offboard.forward(s.views, s.rig, Mode::offboard, &s.binary);
  if (mode == LabelMode::top1) return encode_top1(offboard.decode(r, Mode::offboard, &s.binary));
  const std::size_t k1 = offboard.input().num_classes + 1u;
  const auto v = r.semantic_logits.values();
  Top2Grid g{s.binary.spec(), offboard.input().num_classes, {}};
  g.entries.reserve(g.spec.count());
  for (std::size_t i = 0; i < g.spec.count(); ++i) {
    const auto row = v.subspan(i * k1, k1);
    g.entries.push_back(s.binary.get(i) ? top2_of(row) : top2_outside(row));
  }
  return encode_top2(g);
}

/// Decoded pseudo-labels for a set of scenes, all in one mode.
struct PseudoSet {
  LabelMode mode = LabelMode::top1;
  std::vector<const Scene*> scenes;
  std::vector<SemanticGrid> hard;               // Top1
  std::vector<std::vector<nn::SoftPair>> soft;  // Top2

  std::size_t size() const { return scenes.size(); }
};

inline PseudoSet decode_pseudo_set(LabelMode mode, const std::vector<const Scene*>& scenes,
                                   const std::vector<io::Bytes>& files) {
  require(scenes.size() == files.size(), ErrorKind::invalid_argument, "pseudo-labels: one file per scene");
  PseudoSet set{mode, scenes, {}, {}};
  for (std::size_t i = 0; i < files.size(); ++i) {
    require(file_mode(files[i]) == mode, ErrorKind::mode_mismatch,
            "pseudo-label file " + std::to_string(i) + " is " + std::string(to_string(file_mode(files[i]))) +
                ", the set is " + std::string(to_string(mode)));
    if (mode == LabelMode::top1) {
      auto g = decode_top1(files[i]);
      require(g.spec() == scenes[i]->spec(), ErrorKind::spec_mismatch, "pseudo-labels: grid spec");
      set.hard.push_back(std::move(g));
    } else {
      const auto g = decode_top2(files[i]);
      require(g.spec == scenes[i]->spec(), ErrorKind::spec_mismatch, "pseudo-labels: grid spec");
      std::vector<nn::SoftPair> t;
      t.reserve(g.entries.size());
      for (const auto& e : g.entries) t.push_back(soft_target(e));
      set.soft.push_back(std::move(t));
    }
  }
  return set;
}

/// Student fine-tuning on GT scenes plus pseudo-labelled scenes, shuffled
/// together. Top1 scenes use the hard-label focal loss; Top2 scenes use the
/// soft targets under `objective`.
inline train::FitResult train_on_pseudo(Model& student, const std::vector<const Scene*>& gt, const PseudoSet& pseudo,
                                        train::TrainPlan plan, const std::vector<const Scene*>& val = {},
                                        train::SoftObjective objective = train::SoftObjective::cross_entropy,
                                        train::FitHooks extra = {}) {
  std::set<std::uint64_t> seeds;
  for (const Scene* s : gt) seeds.insert(s->seed);
  for (const Scene* s : pseudo.scenes)
    require(!seeds.contains(s->seed), ErrorKind::invalid_argument,
            "scene " + std::to_string(s->seed) + " is both ground truth and pseudo-labelled");
  auto examples = train::examples_of(gt);
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    if (pseudo.mode == LabelMode::top1)
      examples.push_back({pseudo.scenes[i], &pseudo.hard[i], nullptr});
    else
      examples.push_back({pseudo.scenes[i], nullptr, &pseudo.soft[i], objective});
  }
  return train::finetune(student, examples, plan, {}, val, std::move(extra));
}

}  // namespace b2s::autolabel
