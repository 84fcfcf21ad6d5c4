#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>

#include "b2s/train/evaluate.hpp"
#include "b2s/train/plan.hpp"

namespace b2s::train {

using model::Mode;
using model::Model;
using nn::Tensor;
using ParamFilter = std::function<bool(const std::string&)>;

// ----------------------------------------------------------- checkpoints

inline void save_checkpoint(const std::filesystem::path& path, const Model& m, Stage stage) {
  nn::save_arrays(path, {m.fingerprint(), static_cast<std::uint8_t>(stage)}, m.params().snapshot());
}

/// Copies matching parameters into `m`; refuses checkpoints written for a
/// different architecture.
inline std::size_t load_checkpoint(const std::filesystem::path& path, Model& m, const ParamFilter& accept = {},
                                   Stage* stage = nullptr) {
  nn::CheckpointHeader h;
  const auto arrays = nn::load_arrays(path, &h);
  require(h.fingerprint == m.fingerprint(), ErrorKind::fingerprint_mismatch,
          "checkpoint " + path.string() + " was written for a different model configuration");
  if (stage) *stage = static_cast<Stage>(h.stage);
  return m.params().load(arrays, accept);
}

/// Loads the pretraining partition; every parameter of that partition the
/// model owns must be present in the file.
inline void load_pretrained(const std::filesystem::path& path, Model& m) {
  Stage stage{};
  const auto copied = load_checkpoint(path, m, model::in_pretrain_partition, &stage);
  std::size_t expected = 0;
  for (const auto& [name, t] : m.params().entries()) expected += model::in_pretrain_partition(name);
  require(copied == expected, ErrorKind::spec_mismatch,
          "pretrained checkpoint is missing " + std::to_string(expected - copied) + " trunk parameters");
}

// ------------------------------------------------------------- targets

enum class SoftObjective : std::uint8_t { cross_entropy, focal };

inline std::string_view to_string(SoftObjective o) { return o == SoftObjective::focal ? "focal" : "ce"; }
inline SoftObjective parse_soft_objective(std::string_view s) {
  if (s == "ce") return SoftObjective::cross_entropy;
  if (s == "focal") return SoftObjective::focal;
  fail(ErrorKind::config, "unknown soft-target loss '" + std::string(s) + "' (ce | focal)");
}

/// A semantic training example: hard labels (defaults to the scene's own)
/// or two-class soft targets, one per full-grid voxel.
struct SemanticExample {
  const Scene* scene = nullptr;
  const SemanticGrid* hard = nullptr;
  const std::vector<nn::SoftPair>* soft = nullptr;
  SoftObjective objective = SoftObjective::cross_entropy;

  const SemanticGrid& labels() const { return hard ? *hard : scene->semantic; }

  /// Occupancy implied by the targets (B*). Soft targets come from the
  /// auto-labeler, which saw the scene's binary grid.
  BinaryGrid binary() const { return soft ? scene->binary : binary_from_semantic(labels()); }
};

inline std::vector<SemanticExample> examples_of(const std::vector<const Scene*>& scenes) {
  std::vector<SemanticExample> out;
  for (const Scene* s : scenes) {
    require(s->has_semantic, ErrorKind::invalid_argument, "semantic training needs labelled scenes");
    out.push_back({s, nullptr, nullptr});
  }
  return out;
}

inline std::vector<double> mid_targets(const Model& m, const BinaryGrid& full) {
  const auto coarse = downsample_any(full, m.mid_spec());
  std::vector<double> t(coarse.spec().count());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = coarse.get(i) ? 1.0 : 0.0;
  return t;
}

inline Tensor semantic_loss(const Model& m, const Tensor& logits, const SemanticExample& ex,
                            const std::vector<std::size_t>* rows = nullptr) {
  const auto& c = m.config();
  const auto x = rows ? nn::gather_rows(logits, *rows) : logits;
  if (ex.soft) {
    std::vector<nn::SoftPair> picked;
    if (rows)
      for (auto i : *rows) picked.push_back((*ex.soft)[i]);
    const std::span<const nn::SoftPair> t = rows ? picked : *ex.soft;
    if (ex.objective == SoftObjective::cross_entropy) return nn::soft_target_ce(x, t);
    return nn::soft_focal_loss(x, t, c.focal_gamma, c.focal_alpha);
  }
  const auto labels = ex.labels().labels();
  if (!rows) return nn::focal_loss(x, labels, c.focal_gamma, c.focal_alpha);
  std::vector<std::uint8_t> t;
  for (auto i : *rows) t.push_back(labels[i]);
  return nn::focal_loss(x, t, c.focal_gamma, c.focal_alpha);
}

// ------------------------------------------------------------- the loop

struct StepLoss {
  Tensor total;
  double semantic = NAN;
  double binary = NAN;
  std::uint64_t aux_batches = 0;
};

struct FitHooks {
  std::function<StepLoss(std::size_t example, Rng& aux)> step;
  std::function<void(EpochRecord&)> evaluate;  // fills the val_* fields
  std::function<double(std::uint32_t epoch)> lr;  // constant plan lr when empty
  ParamFilter trainable;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  TrainLog log;
  std::vector<nn::NamedArray> best;  // parameters at the best val mIoU (when evaluated)
  double best_miou = NAN;
  std::uint32_t best_epoch = 0;
};

/// Shuffled mini-batches over `n` examples; gradients of a batch are averaged
/// before one AdamW step. Deterministic given the plan seed.
inline FitResult fit(Model& m, std::size_t n, const TrainPlan& plan, const FitHooks& hooks) {
  require(n > 0, ErrorKind::dataset_empty, "training set is empty");
  plan.validate(m.config());
  FitResult res;
  res.log.stage = plan.stage;
  nn::AdamW opt(plan.optim);
  Rng aux(mix_seed(plan.seed, 0xa0));
  std::vector<std::size_t> order(n);
  for (std::uint32_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (hooks.lr) opt.set_lr(hooks.lr(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed(plan.seed, epoch));
    shuffle.shuffle(std::span<std::size_t>(order));
    EpochRecord rec;
    rec.epoch = epoch;
    double loss = 0.0, sem = 0.0, bin = 0.0;
    std::size_t n_sem = 0, n_bin = 0;
    for (std::size_t start = 0; start < n; start += plan.batch) {
      const auto end = std::min(n, start + plan.batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      m.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto l = hooks.step(order[k], aux);
        nn::scale(l.total, scale).backward();
        loss += l.total.item();
        if (!std::isnan(l.semantic)) sem += l.semantic, ++n_sem;
        if (!std::isnan(l.binary)) bin += l.binary, ++n_bin;
        rec.aux_batches += l.aux_batches;
      }
      opt.step(m.params(), hooks.trainable);
      ++rec.steps;
    }
    rec.loss = loss / static_cast<double>(n);
    if (n_sem) rec.semantic_loss = sem / static_cast<double>(n_sem);
    if (n_bin) rec.binary_loss = bin / static_cast<double>(n_bin);
    if (hooks.evaluate && plan.eval_every && (epoch % plan.eval_every == 0 || epoch == plan.epochs)) {
      hooks.evaluate(rec);
      if (!std::isnan(rec.val_miou) && (std::isnan(res.best_miou) || rec.val_miou > res.best_miou)) {
        res.best_miou = rec.val_miou;
        res.best_epoch = epoch;
        res.best = m.params().snapshot();
      }
    }
    rec.rng_digest = aux.digest() ^ (shuffle.digest() << 1);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return res;
}

// ------------------------------------------------------------- stages

inline std::function<void(EpochRecord&)> val_hook(const Model& m, const std::vector<const Scene*>& val, Mode mode,
                                                  bool semantic) {
  if (val.empty()) return {};
  return [&m, val, mode, semantic](EpochRecord& rec) {
    const auto r = evaluate(m, val, mode, semantic);
    rec.val_binary_iou = r.binary_iou;
    if (semantic) {
      rec.val_iou = r.scores.binary_iou;
      rec.val_miou = r.scores.miou;
    }
  };
}

/// Trains everything up to and including the binary head on binary labels.
inline FitResult pretrain_binary(Model& m, const std::vector<const Scene*>& scenes, TrainPlan plan,
                                 const std::vector<const Scene*>& val = {}, FitHooks extra = {}) {
  plan.stage = Stage::pretrain_binary;
  require(!scenes.empty(), ErrorKind::dataset_empty, "pretraining set is empty");
  std::vector<std::vector<double>> targets;
  for (const Scene* s : scenes) targets.push_back(mid_targets(m, s->binary));
  FitHooks h = std::move(extra);
  h.step = [&](std::size_t i, Rng&) {
    const auto r = m.forward_binary(scenes[i]->views, scenes[i]->rig);
    const auto l = nn::bce_with_logits(r.binary_logits, targets[i]);
    return StepLoss{l, NAN, l.item(), 0};
  };
  h.trainable = model::in_pretrain_partition;
  if (!h.evaluate) h.evaluate = val_hook(m, val, Mode::onboard, false);
  return fit(m, scenes.size(), plan, h);
}

/// Semantic fine-tuning under the plan's regime. `binary_pool` is the
/// pretraining set drawn from under S+B.
inline FitResult finetune(Model& m, const std::vector<SemanticExample>& examples, TrainPlan plan,
                          const std::vector<const Scene*>& binary_pool = {},
                          const std::vector<const Scene*>& val = {}, FitHooks extra = {}) {
  plan.stage = Stage::finetune;
  require(!examples.empty(), ErrorKind::dataset_empty, "fine-tuning set is empty");
  if (plan.regime == Regime::SB)
    require(!binary_pool.empty(), ErrorKind::regime_mismatch, "regime S+B needs the binary pretraining set");
  const bool has_binary = m.config().strategy != model::Strategy::replacing;
  const bool use_bstar = has_binary && plan.regime != Regime::S;
  const double w = m.config().binary_loss_weight;
  std::vector<std::vector<double>> bstar, pool_targets;
  if (use_bstar)
    for (const auto& ex : examples) bstar.push_back(mid_targets(m, ex.binary()));
  if (plan.regime == Regime::SB)
    for (const Scene* s : binary_pool) pool_targets.push_back(mid_targets(m, s->binary));
  FitHooks h = std::move(extra);
  h.step = [&, use_bstar, w](std::size_t i, Rng& aux) {
    const auto& ex = examples[i];
    const auto r = m.forward(ex.scene->views, ex.scene->rig, Mode::onboard);
    StepLoss out;
    const auto ls = semantic_loss(m, r.semantic_logits, ex);
    out.semantic = ls.item();
    out.total = ls;
    if (use_bstar) {
      const auto lb = nn::bce_with_logits(r.binary_logits, bstar[i]);
      out.binary = lb.item();
      out.total = nn::add(out.total, nn::scale(lb, w));
    }
    if (plan.regime == Regime::SB) {
      const auto j = static_cast<std::size_t>(aux.integer(0, static_cast<std::int64_t>(binary_pool.size()) - 1));
      const auto rb = m.forward_binary(binary_pool[j]->views, binary_pool[j]->rig);
      out.total = nn::add(out.total, nn::scale(nn::bce_with_logits(rb.binary_logits, pool_targets[j]), w));
      out.aux_batches = 1;
    }
    return out;
  };
  if (!h.evaluate) h.evaluate = val_hook(m, val, Mode::onboard, true);
  return fit(m, examples.size(), plan, h);
}

/// Offboard training: the gather uses GT binary and the focal loss covers
/// GT-occupied voxels only, since everything else decodes to free.
inline FitResult train_offboard(Model& m, const std::vector<SemanticExample>& examples, TrainPlan plan,
                                const std::vector<const Scene*>& val = {}, FitHooks extra = {}) {
  plan.stage = Stage::offboard;
  require(!examples.empty(), ErrorKind::dataset_empty, "offboard training set is empty");
  std::vector<std::vector<std::size_t>> rows;
  for (const auto& ex : examples) {
    rows.push_back(occupied_rows(ex.scene->binary));
    if (rows.back().empty()) rows.back().push_back(0);
  }
  FitHooks h = std::move(extra);
  h.step = [&](std::size_t i, Rng&) {
    const auto& ex = examples[i];
    const auto r = m.forward(ex.scene->views, ex.scene->rig, Mode::offboard, &ex.scene->binary);
    const auto l = semantic_loss(m, r.semantic_logits, ex, &rows[i]);
    return StepLoss{l, l.item(), NAN, 0};
  };
  if (!h.trainable) h.trainable = [](const std::string& name) { return !name.starts_with("binary.head."); };
  if (!h.evaluate) h.evaluate = val_hook(m, val, Mode::offboard, true);
  return fit(m, examples.size(), plan, h);
}

}  // namespace b2s::train
