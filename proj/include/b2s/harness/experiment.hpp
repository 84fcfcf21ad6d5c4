#pragma once

// Experiment configuration: one plain-text key/value document.
//
//   line     := blank | comment | key '=' value
//   comment  := '#' ... end of line (also after a value)
//   value    := space-separated tokens
//
// Keys are dotted; unknown keys are rejected. See README for the full list.

#include <filesystem>
#include <set>

#include "b2s/autolabel/codec.hpp"
#include "b2s/scene/dataset.hpp"
#include "b2s/train/trainer.hpp"

namespace b2s::harness {

using model::ModelConfig;
using model::Strategy;
using train::Regime;
using train::Stage;
using train::TrainPlan;

struct SweepAxes {
  std::vector<std::uint32_t> pretrain_counts{0, 50, 100, 150};
  std::vector<std::uint32_t> finetune_counts;  // empty: the whole fine-tuning split
  std::vector<Strategy> strategies{Strategy::intermediate};
  std::vector<Regime> regimes{Regime::SBstar};
};

struct AutolabelConfig {
  autolabel::LabelMode mode = autolabel::LabelMode::top2;
  train::SoftObjective top2_loss = train::SoftObjective::cross_entropy;
  std::uint32_t gt_scenes = 50;      // leading fine-tuning scenes with GT labels
  std::uint32_t pseudo_scenes = 150;  // leading pretraining scenes to pseudo-label
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path out = "runs";
  std::vector<std::uint64_t> seeds{0};
  DatasetPlan data{SceneParams{}, 0, 150, 200, 50};
  ModelConfig model;
  TrainPlan pretrain = stage_default(Stage::pretrain_binary);
  TrainPlan finetune = stage_default(Stage::finetune);
  TrainPlan offboard = stage_default(Stage::offboard);
  TrainPlan student = stage_default(Stage::finetune);
  AutolabelConfig autolabel;
  SweepAxes sweep;

  static TrainPlan stage_default(Stage s) {
    TrainPlan p;
    p.stage = s;
    return p;
  }

  model::InputSpec input() const { return model::InputSpec::from(data.params); }

  /// Model config with another strategy (sweeps and baselines).
  ModelConfig model_for(Strategy s) const {
    auto m = model;
    m.strategy = s;
    return m;
  }
};

namespace detail {

template <class T, class F>
std::string join(const std::vector<T>& v, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::string(f(v[i]));
  return out;
}

inline std::string u64s(std::uint64_t v) { return std::to_string(v); }

}  // namespace detail

/// Canonical text: every key, fixed order. Its hash is the config fingerprint.
inline std::string render_experiment(const ExperimentConfig& c) {
  kv::Document d;
  d.set("name", c.name);
  d.set("out", c.out.string());
  d.set("seeds", detail::join(c.seeds, detail::u64s));
  d.set("data.seed", std::to_string(c.data.seed));
  d.set("data.pretrain", std::to_string(c.data.pretrain));
  d.set("data.finetune", std::to_string(c.data.finetune));
  d.set("data.val", std::to_string(c.data.val));
  write_scene_params(d, c.data.params, "data.");
  model::write_model_config(d, c.model, "model.");
  for (const auto& [prefix, plan] : {std::pair{"pretrain.", &c.pretrain}, std::pair{"finetune.", &c.finetune},
                                     std::pair{"offboard.", &c.offboard}, std::pair{"student.", &c.student}})
    train::write_plan(d, *plan, prefix);
  d.set("autolabel.mode", std::string(autolabel::to_string(c.autolabel.mode)));
  d.set("autolabel.top2_loss", std::string(train::to_string(c.autolabel.top2_loss)));
  d.set("autolabel.gt_scenes", std::to_string(c.autolabel.gt_scenes));
  d.set("autolabel.pseudo_scenes", std::to_string(c.autolabel.pseudo_scenes));
  auto u32s = [](std::uint32_t v) { return std::to_string(v); };
  d.set("sweep.pretrain_counts", detail::join(c.sweep.pretrain_counts, u32s));
  d.set("sweep.finetune_counts", detail::join(c.sweep.finetune_counts, u32s));
  d.set("sweep.strategies", detail::join(c.sweep.strategies, [](Strategy s) { return model::to_string(s); }));
  d.set("sweep.regimes", detail::join(c.sweep.regimes, [](Regime r) { return train::to_string(r); }));
  return d.str();
}

inline std::uint64_t experiment_fingerprint(const ExperimentConfig& c) { return fnv1a(render_experiment(c)); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Cross-field checks; raises ErrorKind::config.
inline void validate_experiment(const ExperimentConfig& c) {
  auto chk = [](bool ok, const std::string& m) { require(ok, ErrorKind::config, "experiment: " + m); };
  chk(!c.seeds.empty(), "seeds must not be empty");
  chk(c.data.finetune + c.data.val + c.data.pretrain > 0, "the dataset is empty");
  const auto in = c.input();
  c.model.validate(in);
  for (auto s : {Strategy::intermediate, Strategy::multi_head, Strategy::replacing}) c.model_for(s).validate(in);
  chk(c.pretrain.stage == Stage::pretrain_binary, "pretrain.stage must be pretrain_binary");
  chk(c.finetune.stage == Stage::finetune, "finetune.stage must be finetune");
  chk(c.offboard.stage == Stage::offboard, "offboard.stage must be offboard");
  chk(c.student.stage == Stage::finetune, "student.stage must be finetune");
  c.pretrain.validate(c.model_for(Strategy::intermediate));
  c.finetune.validate(c.model);
  c.offboard.validate(c.model_for(Strategy::intermediate));
  c.student.validate(c.model_for(Strategy::intermediate));
  chk(c.autolabel.gt_scenes <= c.data.finetune, "autolabel.gt_scenes exceeds data.finetune");
  chk(c.autolabel.pseudo_scenes <= c.data.pretrain, "autolabel.pseudo_scenes exceeds data.pretrain");
  chk(!c.sweep.pretrain_counts.empty() && !c.sweep.strategies.empty() && !c.sweep.regimes.empty(),
      "sweep axes must not be empty");
  for (auto n : c.sweep.pretrain_counts) chk(n <= c.data.pretrain, "sweep.pretrain_counts exceeds data.pretrain");
  for (auto n : c.sweep.finetune_counts)
    chk(n > 0 && n <= c.data.finetune, "sweep.finetune_counts must lie in 1..data.finetune");
  for (auto s : c.sweep.strategies)
    for (auto r : c.sweep.regimes) {
      if (s == Strategy::replacing)
        chk(r == Regime::S, "sweep: the replacing strategy only runs under regime S");
      if (r == Regime::SB)
        for (auto n : c.sweep.pretrain_counts)
          chk(n > 0, "sweep: regime S+B needs pretraining scenes, so pretrain count 0 is invalid");
    }
}

inline ExperimentConfig parse_experiment(std::string_view text, std::string_view origin = "config") {
  const auto d = kv::Document::parse(text, origin);
  ExperimentConfig c;
  std::set<std::string> used;
  auto take = [&](const std::vector<std::string>& keys) { used.insert(keys.begin(), keys.end()); };
  auto get = [&](const std::string& k) -> const std::string* {
    if (!d.has(k)) return nullptr;
    used.insert(k);
    return &d.get(k);
  };
  auto list = [](const std::string& v) { return kv::split(v, " \t,"); };
  if (auto v = get("name")) c.name = *v;
  if (auto v = get("out")) c.out = *v;
  if (auto v = get("seeds")) {
    c.seeds.clear();
    for (const auto& s : list(*v)) c.seeds.push_back(kv::to_int<std::uint64_t>(s, "seeds"));
  }
  if (auto v = get("data.seed")) c.data.seed = kv::to_int<std::uint64_t>(*v, "data.seed");
  if (auto v = get("data.pretrain")) c.data.pretrain = kv::to_int<std::uint32_t>(*v, "data.pretrain");
  if (auto v = get("data.finetune")) c.data.finetune = kv::to_int<std::uint32_t>(*v, "data.finetune");
  if (auto v = get("data.val")) c.data.val = kv::to_int<std::uint32_t>(*v, "data.val");
  take(read_scene_params(d, c.data.params, "data."));
  take(model::read_model_config(d, c.model, "model."));
  take(train::read_plan(d, c.pretrain, "pretrain."));
  take(train::read_plan(d, c.finetune, "finetune."));
  take(train::read_plan(d, c.offboard, "offboard."));
  take(train::read_plan(d, c.student, "student."));
  if (auto v = get("autolabel.mode")) c.autolabel.mode = autolabel::parse_label_mode(*v);
  if (auto v = get("autolabel.top2_loss")) c.autolabel.top2_loss = train::parse_soft_objective(*v);
  if (auto v = get("autolabel.gt_scenes")) c.autolabel.gt_scenes = kv::to_int<std::uint32_t>(*v, "autolabel.gt_scenes");
  if (auto v = get("autolabel.pseudo_scenes"))
    c.autolabel.pseudo_scenes = kv::to_int<std::uint32_t>(*v, "autolabel.pseudo_scenes");
  auto counts = [&](const std::string& v, const char* key) {
    std::vector<std::uint32_t> out;
    for (const auto& s : list(v)) out.push_back(kv::to_int<std::uint32_t>(s, key));
    return out;
  };
  if (auto v = get("sweep.pretrain_counts")) c.sweep.pretrain_counts = counts(*v, "sweep.pretrain_counts");
  if (auto v = get("sweep.finetune_counts")) c.sweep.finetune_counts = counts(*v, "sweep.finetune_counts");
  if (auto v = get("sweep.strategies")) {
    c.sweep.strategies.clear();
    for (const auto& s : list(*v)) c.sweep.strategies.push_back(model::parse_strategy(s));
  }
  if (auto v = get("sweep.regimes")) {
    c.sweep.regimes.clear();
    // "S+B*" contains no separator, so plain splitting is safe
    for (const auto& s : list(*v)) c.sweep.regimes.push_back(train::parse_regime(s));
  }
  for (const auto& k : d.keys())
    require(used.contains(k), ErrorKind::config, std::string(origin) + ": unknown key '" + k + "'");
  validate_experiment(c);
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return parse_experiment(io::read_text(path), path.string());
}

}  // namespace b2s::harness
