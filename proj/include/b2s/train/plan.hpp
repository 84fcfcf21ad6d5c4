#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "b2s/common/kv.hpp"
#include "b2s/model/config.hpp"
#include "b2s/nn/params.hpp"

namespace b2s::train {

enum class Stage : std::uint8_t { pretrain_binary = 0, finetune = 1, offboard = 2 };

/// Fine-tuning data: semantic only, plus binary targets derived from the
/// semantic labels (B*), plus a batch from the binary pretraining set (B).
enum class Regime : std::uint8_t { S, SBstar, SB };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::pretrain_binary: return "pretrain_binary";
    case Stage::finetune: return "finetune";
    case Stage::offboard: return "offboard";
  }
  return "?";
}
inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::S: return "S";
    case Regime::SBstar: return "S+B*";
    case Regime::SB: return "S+B";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  if (s == "pretrain_binary") return Stage::pretrain_binary;
  if (s == "finetune") return Stage::finetune;
  if (s == "offboard") return Stage::offboard;
  fail(ErrorKind::config, "unknown stage '" + std::string(s) + "'");
}
inline Regime parse_regime(std::string_view s) {
  if (s == "S") return Regime::S;
  if (s == "S+B*") return Regime::SBstar;
  if (s == "S+B") return Regime::SB;
  fail(ErrorKind::config, "unknown regime '" + std::string(s) + "' (S | S+B* | S+B)");
}

struct TrainPlan {
  Stage stage = Stage::finetune;
  Regime regime = Regime::SBstar;
  std::uint32_t epochs = 40;
  std::uint32_t batch = 4;
  std::uint64_t seed = 0;
  nn::AdamWConfig optim;
  std::uint32_t eval_every = 1;  // epochs between validation passes; 0 disables

  void validate(const model::ModelConfig& m) const {
    require(epochs > 0 && batch > 0, ErrorKind::config, "train: epochs and batch must be positive");
    require(optim.lr > 0.0 && optim.weight_decay >= 0.0, ErrorKind::config, "train: bad optimizer settings");
    if (stage != Stage::finetune)
      require(m.strategy == model::Strategy::intermediate, ErrorKind::regime_mismatch,
              std::string(to_string(stage)) + " trains the intermediate strategy only");
    if (stage == Stage::finetune && m.strategy == model::Strategy::replacing)
      require(regime == Regime::S, ErrorKind::regime_mismatch,
              "the replacing strategy has no binary head, so only regime S applies");
  }
};

inline void write_plan(kv::Document& d, const TrainPlan& p, const std::string& prefix = "train.") {
  d.set(prefix + "stage", std::string(to_string(p.stage)));
  d.set(prefix + "regime", std::string(to_string(p.regime)));
  d.set(prefix + "epochs", std::to_string(p.epochs));
  d.set(prefix + "batch", std::to_string(p.batch));
  d.set(prefix + "seed", std::to_string(p.seed));
  d.set(prefix + "lr", kv::fmt(p.optim.lr));
  d.set(prefix + "betas", kv::fmt(p.optim.beta1) + " " + kv::fmt(p.optim.beta2));
  d.set(prefix + "eps", kv::fmt(p.optim.eps));
  d.set(prefix + "weight_decay", kv::fmt(p.optim.weight_decay));
  d.set(prefix + "eval_every", std::to_string(p.eval_every));
}

inline std::vector<std::string> read_plan(const kv::Document& d, TrainPlan& p, const std::string& prefix = "train.") {
  std::vector<std::string> used;
  auto get = [&](const char* k) -> const std::string* {
    if (!d.has(prefix + k)) return nullptr;
    used.push_back(prefix + k);
    return &d.get(prefix + k);
  };
  if (auto v = get("stage")) p.stage = parse_stage(*v);
  if (auto v = get("regime")) p.regime = parse_regime(*v);
  if (auto v = get("epochs")) p.epochs = kv::to_int<std::uint32_t>(*v, prefix + "epochs");
  if (auto v = get("batch")) p.batch = kv::to_int<std::uint32_t>(*v, prefix + "batch");
  if (auto v = get("seed")) p.seed = kv::to_int<std::uint64_t>(*v, prefix + "seed");
  if (auto v = get("lr")) p.optim.lr = kv::to_double(*v, prefix + "lr");
  if (auto v = get("betas")) {
    const auto parts = kv::split(*v);
    require(parts.size() == 2, ErrorKind::config, prefix + "betas: expected two values");
    p.optim.beta1 = kv::to_double(parts[0], prefix + "betas");
    p.optim.beta2 = kv::to_double(parts[1], prefix + "betas");
  }
  if (auto v = get("eps")) p.optim.eps = kv::to_double(*v, prefix + "eps");
  if (auto v = get("weight_decay")) p.optim.weight_decay = kv::to_double(*v, prefix + "weight_decay");
  if (auto v = get("eval_every")) p.eval_every = kv::to_int<std::uint32_t>(*v, prefix + "eval_every");
  return used;
}

// ------------------------------------------------------------------ logs

struct EpochRecord {
  std::uint32_t epoch = 0;
  std::uint64_t steps = 0;
  std::uint64_t aux_batches = 0;  // binary pretraining batches consumed (regime S+B)
  double loss = 0.0;
  double semantic_loss = NAN;
  double binary_loss = NAN;
  double val_binary_iou = NAN;
  double val_iou = NAN;
  double val_miou = NAN;
  std::uint64_t rng_digest = 0;
  double wall_seconds = 0.0;  // kept out of the CSV so it stays reproducible
};

inline constexpr std::string_view kTrainLogHeader =
    "stage,epoch,steps,aux_batches,loss,semantic_loss,binary_loss,val_binary_iou,val_iou,val_miou,rng_digest";

struct TrainLog {
  Stage stage = Stage::finetune;
  std::vector<EpochRecord> epochs;

  static std::string num(double v) { return std::isnan(v) ? "" : kv::fmt(v); }

  std::string csv() const {
    std::string out(kTrainLogHeader);
    out += '\n';
    for (const auto& e : epochs) {
      char digest[17];
      std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(e.rng_digest));
      out += std::string(to_string(stage)) + "," + std::to_string(e.epoch) + "," + std::to_string(e.steps) + "," +
             std::to_string(e.aux_batches) + "," + num(e.loss) + "," + num(e.semantic_loss) + "," +
             num(e.binary_loss) + "," + num(e.val_binary_iou) + "," + num(e.val_iou) + "," + num(e.val_miou) + "," +
             digest + "\n";
    }
    return out;
  }

  std::string timing_csv() const {
    std::string out = "epoch,wall_seconds\n";
    for (const auto& e : epochs) out += std::to_string(e.epoch) + "," + kv::fmt(e.wall_seconds) + "\n";
    return out;
  }

  std::uint64_t digest() const { return fnv1a(csv()); }
};

}  // namespace b2s::train
