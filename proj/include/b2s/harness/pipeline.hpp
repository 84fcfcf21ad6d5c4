#pragma once

// Stage runners shared by the command line and the acceptance runs. Data
// lives in memory; commands.hpp adds the on-disk layout.

#include <optional>

#include "b2s/autolabel/pseudo.hpp"
#include "b2s/harness/experiment.hpp"

namespace b2s::harness {

using autolabel::LabelMode;
using model::Mode;
using model::Model;
using train::FitResult;

struct Corpus {
  DatasetPlan plan;
  std::vector<DatasetEntry> entries;  // plan order: pretrain, finetune, val
  std::vector<Scene> pretrain, finetune, val;

  std::vector<Scene>& of(Split s) {
    return s == Split::pretrain_binary ? pretrain : s == Split::finetune_semantic ? finetune : val;
  }
  const std::vector<Scene>& of(Split s) const { return const_cast<Corpus*>(this)->of(s); }

  /// Id of the i-th scene of a split, as used on disk.
  const std::string& id(Split s, std::size_t i) const {
    std::size_t seen = 0;
    for (const auto& e : entries)
      if (e.split == s && seen++ == i) return e.id;
    fail(ErrorKind::invalid_argument, "scene index out of range");
  }
};

inline std::vector<const Scene*> leading(const std::vector<Scene>& v, std::size_t n) {
  require(n <= v.size(), ErrorKind::invalid_argument,
          "asked for " + std::to_string(n) + " scenes, the split has " + std::to_string(v.size()));
  std::vector<const Scene*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&v[i]);
  return out;
}

inline Corpus generate_corpus(const DatasetPlan& plan) {
  Corpus c{plan, plan_entries(plan), {}, {}, {}};
  for (const auto& e : c.entries) c.of(e.split).push_back(make_dataset_scene(plan, e));
  return c;
}

/// Hash of everything that determines the generated scenes.
inline std::uint64_t dataset_fingerprint(const DatasetPlan& plan) {
  return fnv1a(dataset_manifest(plan, plan_entries(plan), 0));
}

/// Model seeds are shared across strategies so that paired runs start from
/// the same trunk initialization.
inline Model new_model(const ExperimentConfig& c, Strategy s, std::uint64_t seed) {
  return Model(c.model_for(s), c.input(), seed);
}

inline TrainPlan seeded(TrainPlan p, std::uint64_t seed) {
  p.seed = mix_seed(p.seed, seed);
  return p;
}

struct StageRun {
  FitResult fit;
  train::EvalResult val;  // last-epoch model on the validation scenes
};

inline std::function<void(train::EpochRecord&)> val_hook_or_none(const Model& m, const std::vector<const Scene*>& val,
                                                                  Mode mode, bool semantic) {
  return val.empty() ? std::function<void(train::EpochRecord&)>{} : train::val_hook(m, val, mode, semantic);
}

inline StageRun run_pretrain(Model& m, const std::vector<const Scene*>& scenes, const TrainPlan& plan,
                             const std::vector<const Scene*>& val) {
  StageRun r{train::pretrain_binary(m, scenes, plan, val), {}};
  if (!val.empty()) r.val = train::evaluate(m, val, Mode::onboard, false);
  return r;
}

inline void load_trunk(Model& m, const std::vector<nn::NamedArray>& pretrained) {
  m.params().load(pretrained, model::in_pretrain_partition);
}

inline StageRun run_finetune(Model& m, const std::vector<train::SemanticExample>& examples, const TrainPlan& plan,
                             const std::vector<const Scene*>& binary_pool, const std::vector<const Scene*>& val) {
  StageRun r{train::finetune(m, examples, plan, binary_pool, val), {}};
  if (!val.empty()) r.val = train::evaluate(m, val, Mode::onboard);
  return r;
}

inline StageRun run_offboard(Model& m, const std::vector<const Scene*>& scenes, const TrainPlan& plan,
                             const std::vector<const Scene*>& val) {
  StageRun r{train::train_offboard(m, train::examples_of(scenes), plan, val), {}};
  if (!val.empty()) r.val = train::evaluate(m, val, Mode::offboard);
  return r;
}

inline std::vector<io::Bytes> label_scenes(const Model& offboard, const std::vector<const Scene*>& scenes,
                                           LabelMode mode) {
  std::vector<io::Bytes> files;
  for (const Scene* s : scenes) files.push_back(autolabel::generate_pseudo_labels(offboard, *s, mode));
  return files;
}

inline StageRun run_student(Model& m, const std::vector<const Scene*>& gt, const autolabel::PseudoSet& pseudo,
                            const TrainPlan& plan, train::SoftObjective objective,
                            const std::vector<const Scene*>& val) {
  StageRun r{autolabel::train_on_pseudo(m, gt, pseudo, plan, val, objective), {}};
  if (!val.empty()) r.val = train::evaluate(m, val, Mode::onboard);
  return r;
}

}  // namespace b2s::harness
