#pragma once

// Command implementations behind the CLI. On-disk layout under the output
// root:
//
//   data/                      gen-data (see scene/dataset.hpp)
//   seed<k>/pretrain/          model.ckpt best.ckpt train_log.csv timing.csv run.txt
//   seed<k>/finetune/          same files
//   seed<k>/offboard/          same files
//   seed<k>/labels/            <scene id>.b2sp for the labelled pretraining scenes, run.txt
//   seed<k>/student/           same files as a training run
//   sweep/                     sweep.csv summary.csv run.txt, cells/ and pretrain/ caches
//
// run.txt records the experiment fingerprint, the dataset and model
// fingerprints, and an fnv1a hash of every artifact written next to it.

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include "b2s/harness/bev.hpp"
#include "b2s/harness/pipeline.hpp"

namespace b2s::harness {

struct CommandOptions {
  std::filesystem::path out;  // output root; the config's `out` when empty
  std::uint64_t seed = 0;
  bool force = false;
  std::uint32_t workers = 1;
};

inline std::filesystem::path output_root(const ExperimentConfig& c, const CommandOptions& o) {
  return o.out.empty() ? c.out : o.out;
}

inline std::filesystem::path seed_dir(const ExperimentConfig& c, const CommandOptions& o) {
  return output_root(c, o) / ("seed" + std::to_string(o.seed));
}

/// Refuses to reuse a non-empty directory unless forced, in which case it is
/// cleared first.
inline void claim_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    require(force, ErrorKind::io, dir.string() + " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

inline std::string first_line(const std::filesystem::path& p) {
  const auto text = io::read_text(p);
  return std::string(kv::trim(std::string_view(text).substr(0, text.find('\n'))));
}

inline std::string file_hash(const std::filesystem::path& p) { return hex64(fnv1a(io::read_text(p))); }

struct RunInfo {
  std::string stage;
  Strategy strategy = Strategy::intermediate;
  std::string regime;
  std::uint64_t seed = 0;
  std::size_t scenes = 0;
  std::string source;  // checkpoint this run started from
};

inline void write_run_info(const std::filesystem::path& dir, const ExperimentConfig& c, const RunInfo& r,
                           const std::vector<std::string>& artifacts) {
  kv::Document d;
  d.set("config_fingerprint", hex64(experiment_fingerprint(c)));
  d.set("dataset_fingerprint", hex64(dataset_fingerprint(c.data)));
  d.set("model_fingerprint", hex64(model::architecture_fingerprint(c.model_for(r.strategy), c.input())));
  d.set("stage", r.stage);
  d.set("strategy", std::string(model::to_string(r.strategy)));
  d.set("regime", r.regime);
  d.set("seed", std::to_string(r.seed));
  d.set("scenes", std::to_string(r.scenes));
  d.set("source", r.source);
  for (const auto& a : artifacts) d.set("artifact." + a, file_hash(dir / a));
  io::write_text(dir / "run.txt", d.str());
}

inline std::optional<kv::Document> read_run_info(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "run.txt")) return std::nullopt;
  return kv::Document::parse(io::read_text(dir / "run.txt"), (dir / "run.txt").string());
}

/// A checkpoint whose run.txt names another experiment config is refused
/// unless forced.
inline void check_source(const ExperimentConfig& c, const CommandOptions& o, const std::filesystem::path& ckpt) {
  require(std::filesystem::exists(ckpt), ErrorKind::io, ckpt.string() + " does not exist");
  const auto info = read_run_info(ckpt.parent_path());
  if (!info || o.force) return;
  const auto fp = info->get("config_fingerprint");
  require(fp == hex64(experiment_fingerprint(c)), ErrorKind::fingerprint_mismatch,
          ckpt.string() + " was produced under config " + fp + ", not " + hex64(experiment_fingerprint(c)) +
              "; pass --force to use it anyway");
}

// ------------------------------------------------------------------ data

inline std::filesystem::path data_dir(const ExperimentConfig& c, const CommandOptions& o) {
  return output_root(c, o) / "data";
}

inline void cmd_gen_data(const ExperimentConfig& c, const CommandOptions& o) {
  const auto root = data_dir(c, o);
  claim_dir(root, o.force);
  const auto entries = plan_entries(c.data);
  for (const auto& e : entries) save_scene(root / e.id, make_dataset_scene(c.data, e), e.split);
  io::write_text(root / "dataset.txt", dataset_manifest(c.data, entries, dataset_fingerprint(c.data)));
}

inline Corpus load_corpus(const std::filesystem::path& root, const DatasetPlan& expected) {
  require(std::filesystem::exists(root / "dataset.txt"), ErrorKind::io,
          "no dataset at " + root.string() + "; run gen-data first");
  const auto idx = load_dataset_index(root);
  require(idx.fingerprint == dataset_fingerprint(expected), ErrorKind::fingerprint_mismatch,
          "dataset at " + root.string() + " was generated from a different configuration");
  Corpus c{idx.plan, idx.entries, {}, {}, {}};
  for (const auto& e : c.entries) {
    Split split{};
    c.of(e.split).push_back(load_scene(root / e.id, &split));
    require(split == e.split && c.of(e.split).back().seed == e.seed, ErrorKind::spec_mismatch,
            "scene " + e.id + " does not match the dataset manifest");
  }
  return c;
}

inline Corpus load_corpus(const ExperimentConfig& c, const CommandOptions& o) {
  return load_corpus(data_dir(c, o), c.data);
}

// ------------------------------------------------------------ training

inline std::vector<std::string> save_training_run(const std::filesystem::path& dir, const Model& m, Stage stage,
                                                  const FitResult& fit) {
  train::save_checkpoint(dir / "model.ckpt", m, stage);
  // timing.csv holds wall-clock times, so it is left out of the run.txt hashes
  std::vector<std::string> files{"model.ckpt", "train_log.csv"};
  if (!fit.best.empty()) {
    nn::save_arrays(dir / "best.ckpt", {m.fingerprint(), static_cast<std::uint8_t>(stage)}, fit.best);
    files.push_back("best.ckpt");
  }
  io::write_text(dir / "train_log.csv", fit.log.csv());
  io::write_text(dir / "timing.csv", fit.log.timing_csv());
  return files;
}

inline std::filesystem::path cmd_pretrain(const ExperimentConfig& c, const CommandOptions& o) {
  const auto corpus = load_corpus(c, o);
  const auto dir = seed_dir(c, o) / "pretrain";
  claim_dir(dir, o.force);
  auto m = new_model(c, Strategy::intermediate, o.seed);
  const auto scenes = leading(corpus.pretrain, corpus.pretrain.size());
  const auto run = run_pretrain(m, scenes, seeded(c.pretrain, o.seed), leading(corpus.val, corpus.val.size()));
  const auto files = save_training_run(dir, m, Stage::pretrain_binary, run.fit);
  write_run_info(dir, c, {"pretrain_binary", Strategy::intermediate, "B", o.seed, scenes.size(), ""}, files);
  return dir;
}

/// `from` is a pretraining checkpoint; empty trains from scratch.
inline std::filesystem::path cmd_finetune(const ExperimentConfig& c, const CommandOptions& o,
                                          const std::filesystem::path& from) {
  const auto corpus = load_corpus(c, o);
  auto m = new_model(c, c.model.strategy, o.seed);
  if (!from.empty()) {
    check_source(c, o, from);
    train::load_pretrained(from, m);
  }
  const auto dir = seed_dir(c, o) / "finetune";
  claim_dir(dir, o.force);
  const auto scenes = leading(corpus.finetune, corpus.finetune.size());
  const auto pool = c.finetune.regime == Regime::SB ? leading(corpus.pretrain, corpus.pretrain.size())
                                                    : std::vector<const Scene*>{};
  const auto run = run_finetune(m, train::examples_of(scenes), seeded(c.finetune, o.seed), pool,
                                leading(corpus.val, corpus.val.size()));
  const auto files = save_training_run(dir, m, Stage::finetune, run.fit);
  write_run_info(dir, c,
                 {"finetune", c.model.strategy, std::string(train::to_string(c.finetune.regime)), o.seed,
                  scenes.size(), from.string()},
                 files);
  return dir;
}

inline std::filesystem::path cmd_offboard(const ExperimentConfig& c, const CommandOptions& o) {
  const auto corpus = load_corpus(c, o);
  auto m = new_model(c, Strategy::intermediate, o.seed);
  const auto dir = seed_dir(c, o) / "offboard";
  claim_dir(dir, o.force);
  const auto scenes = leading(corpus.finetune, c.autolabel.gt_scenes);
  const auto run = run_offboard(m, scenes, seeded(c.offboard, o.seed), leading(corpus.val, corpus.val.size()));
  const auto files = save_training_run(dir, m, Stage::offboard, run.fit);
  write_run_info(dir, c, {"offboard", Strategy::intermediate, "S", o.seed, scenes.size(), ""}, files);
  return dir;
}

inline std::filesystem::path cmd_autolabel(const ExperimentConfig& c, const CommandOptions& o,
                                           const std::filesystem::path& from) {
  require(!from.empty(), ErrorKind::missing_gt_binary, "autolabel requires an offboard checkpoint (--from)");
  check_source(c, o, from);
  nn::CheckpointHeader h;
  nn::load_arrays(from, &h);
  require(h.stage == static_cast<std::uint8_t>(Stage::offboard), ErrorKind::mode_mismatch,
          from.string() + " is a " + std::string(train::to_string(static_cast<Stage>(h.stage))) +
              " checkpoint; autolabel requires an offboard checkpoint");
  const auto corpus = load_corpus(c, o);
  auto m = new_model(c, Strategy::intermediate, o.seed);
  train::load_checkpoint(from, m);
  const auto dir = seed_dir(c, o) / "labels";
  claim_dir(dir, o.force);
  const auto scenes = leading(corpus.pretrain, c.autolabel.pseudo_scenes);
  const auto files = label_scenes(m, scenes, c.autolabel.mode);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < files.size(); ++i) {
    names.push_back(corpus.id(Split::pretrain_binary, i) + ".b2sp");
    io::write_file(dir / names.back(), files[i]);
  }
  write_run_info(dir, c,
                 {"autolabel", Strategy::intermediate, std::string(autolabel::to_string(c.autolabel.mode)), o.seed,
                  scenes.size(), from.string()},
                 names);
  return dir;
}

/// `labels` is an autolabel output directory; `from` an optional pretraining
/// checkpoint for the student trunk.
inline std::filesystem::path cmd_student(const ExperimentConfig& c, const CommandOptions& o,
                                         const std::filesystem::path& labels, const std::filesystem::path& from) {
  const auto corpus = load_corpus(c, o);
  std::vector<const Scene*> pseudo_scenes;
  std::vector<io::Bytes> files;
  for (std::size_t i = 0; i < corpus.pretrain.size(); ++i) {
    const auto path = labels / (corpus.id(Split::pretrain_binary, i) + ".b2sp");
    if (!std::filesystem::exists(path)) continue;
    pseudo_scenes.push_back(&corpus.pretrain[i]);
    files.push_back(io::read_file(path));
  }
  const auto mode = files.empty() ? c.autolabel.mode : autolabel::file_mode(files.front());
  const auto set = autolabel::decode_pseudo_set(mode, pseudo_scenes, files);
  auto m = new_model(c, Strategy::intermediate, o.seed);
  if (!from.empty()) {
    check_source(c, o, from);
    train::load_pretrained(from, m);
  }
  const auto dir = seed_dir(c, o) / "student";
  claim_dir(dir, o.force);
  const auto gt = leading(corpus.finetune, c.autolabel.gt_scenes);
  const auto run = run_student(m, gt, set, seeded(c.student, o.seed), c.autolabel.top2_loss,
                               leading(corpus.val, corpus.val.size()));
  const auto names = save_training_run(dir, m, Stage::finetune, run.fit);
  write_run_info(dir, c,
                 {"student", Strategy::intermediate, std::string(autolabel::to_string(mode)), o.seed,
                  gt.size() + pseudo_scenes.size(), from.string()},
                 names);
  return dir;
}

// ------------------------------------------------------------------ eval

inline std::string_view mode_name(Mode m) { return m == Mode::offboard ? "offboard" : "onboard"; }

inline std::string eval_header(std::uint8_t k) {
  std::string h = "config_fingerprint,checkpoint,split,mode,scenes,iou,miou,binary_iou";
  for (std::uint8_t j = 1; j <= k; ++j) h += ",iou_class_" + std::to_string(j);
  return h;
}

inline std::string opt_num(const std::optional<double>& v) { return v ? kv::fmt(*v) : ""; }
inline std::string num_or_empty(double v) { return std::isnan(v) ? "" : kv::fmt(v); }

inline std::string eval_row(const std::string& fp, const std::string& ckpt, Split split, Mode mode,
                            const train::EvalResult& r) {
  std::string row = fp + "," + ckpt + "," + std::string(to_string(split)) + "," +
                    std::string(mode_name(mode)) + "," + std::to_string(r.scenes) + "," +
                    kv::fmt(r.scores.binary_iou) + "," + kv::fmt(r.scores.miou) + "," + num_or_empty(r.binary_iou);
  for (const auto& v : r.scores.per_class) row += "," + opt_num(v);
  return row;
}

/// Evaluates a checkpoint on a split. The strategy comes from the run.txt
/// next to the checkpoint when present; a run made under another experiment
/// config is refused unless forced.
inline std::string cmd_eval(const ExperimentConfig& c, const CommandOptions& o, const std::filesystem::path& ckpt,
                            Split split) {
  const auto dir = ckpt.parent_path();
  auto strategy = c.model.strategy;
  if (const auto info = read_run_info(dir)) {
    check_source(c, o, ckpt);
    strategy = model::parse_strategy(info->get("strategy"));
  }
  nn::CheckpointHeader h;
  nn::load_arrays(ckpt, &h);
  const auto mode = h.stage == static_cast<std::uint8_t>(Stage::offboard) ? Mode::offboard : Mode::onboard;
  require(h.stage != static_cast<std::uint8_t>(Stage::pretrain_binary) || strategy != Strategy::replacing,
          ErrorKind::mode_mismatch, "cannot evaluate a binary checkpoint as the replacing strategy");
  const auto corpus = load_corpus(c, o);
  auto m = new_model(c, strategy, o.seed);
  train::load_checkpoint(ckpt, m);
  const auto& scenes = corpus.of(split);
  require(!scenes.empty(), ErrorKind::dataset_empty, "split " + std::string(to_string(split)) + " is empty");
  for (const auto& s : scenes)
    require(s.has_semantic, ErrorKind::invalid_argument, "eval needs a split with semantic labels");
  const auto r = train::evaluate(m, leading(scenes, scenes.size()), mode);
  const auto csv = eval_header(c.data.params.num_classes) + "\n" +
                   eval_row(hex64(experiment_fingerprint(c)), ckpt.string(), split, mode, r) + "\n";
  io::write_text(dir / ("eval_" + std::string(to_string(split)) + ".csv"), csv);
  return csv;
}

// ----------------------------------------------------------------- sweep

struct SweepCell {
  Strategy strategy;
  Regime regime;
  std::uint32_t pretrain_scenes;
  std::uint32_t finetune_scenes;
  std::uint64_t seed;
};

inline std::vector<SweepCell> sweep_cells(const ExperimentConfig& c) {
  auto ft = c.sweep.finetune_counts;
  if (ft.empty()) ft.push_back(c.data.finetune);
  std::vector<SweepCell> out;
  for (auto s : c.sweep.strategies)
    for (auto r : c.sweep.regimes)
      for (auto f : ft)
        for (auto n : c.sweep.pretrain_counts)
          for (auto seed : c.seeds) out.push_back({s, r, n, f, seed});
  return out;
}

/// Changes whenever anything that affects the pretraining result changes.
inline std::uint64_t pretrain_job_fingerprint(const ExperimentConfig& c, std::uint32_t n, std::uint64_t seed) {
  kv::Document d;
  d.set("dataset", hex64(dataset_fingerprint(c.data)));
  model::write_model_config(d, c.model_for(Strategy::intermediate), "model.");
  train::write_plan(d, c.pretrain, "pretrain.");
  d.set("scenes", std::to_string(n));
  d.set("seed", std::to_string(seed));
  return fnv1a(d.str());
}

inline std::uint64_t cell_fingerprint(const ExperimentConfig& c, const SweepCell& cell) {
  kv::Document d;
  d.set("pretrain", hex64(cell.pretrain_scenes ? pretrain_job_fingerprint(c, cell.pretrain_scenes, cell.seed) : 0));
  model::write_model_config(d, c.model_for(cell.strategy), "model.");
  auto plan = c.finetune;
  plan.regime = cell.regime;
  train::write_plan(d, plan, "finetune.");
  d.set("dataset", hex64(dataset_fingerprint(c.data)));
  d.set("finetune_scenes", std::to_string(cell.finetune_scenes));
  d.set("seed", std::to_string(cell.seed));
  return fnv1a(d.str());
}

inline std::string sweep_header(std::uint8_t k) {
  std::string h =
      "config_fingerprint,cell,strategy,regime,pretrain_scenes,finetune_scenes,seed,iou,miou,binary_iou_pretrain,"
      "binary_iou_final";
  for (std::uint8_t j = 1; j <= k; ++j) h += ",iou_class_" + std::to_string(j);
  return h;
}

inline std::string summary_header() {
  return "strategy,regime,pretrain_scenes,finetune_scenes,seeds,mean_iou,mean_miou,mean_binary_iou_final";
}

/// Runs `jobs` on up to `workers` threads; the first error is rethrown.
inline void run_parallel(std::size_t jobs, std::uint32_t workers, const std::function<void(std::size_t)>& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = jobs;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::uint32_t t = 1; t < std::max<std::uint32_t>(1, workers); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Comma split that keeps empty fields.
inline std::vector<std::string> csv_fields(std::string_view row) {
  std::vector<std::string> v;
  for (std::size_t pos = 0;;) {
    const auto comma = row.find(',', pos);
    v.emplace_back(row.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) return v;
    pos = comma + 1;
  }
}

struct SweepResult {
  std::string csv;
  std::string summary;
  std::size_t cells_run = 0;
  std::size_t cells_cached = 0;
};

/// Resumable: each finished cell leaves cells/<fingerprint>.csv and is
/// skipped on the next run; pretraining checkpoints are cached likewise.
inline SweepResult cmd_sweep(const ExperimentConfig& c, const CommandOptions& o) {
  namespace fs = std::filesystem;
  const auto corpus = load_corpus(c, o);
  const auto root = output_root(c, o) / "sweep";
  if (o.force) fs::remove_all(root);
  fs::create_directories(root / "cells");
  fs::create_directories(root / "pretrain");
  const auto cells = sweep_cells(c);
  const auto val = leading(corpus.val, corpus.val.size());
  const std::uint8_t k = c.data.params.num_classes;

  std::map<std::uint64_t, std::pair<std::uint32_t, std::uint64_t>> jobs;  // fingerprint -> (scenes, seed)
  for (const auto& cell : cells)
    if (cell.pretrain_scenes) jobs[pretrain_job_fingerprint(c, cell.pretrain_scenes, cell.seed)] = {cell.pretrain_scenes, cell.seed};
  const std::vector<std::pair<std::uint64_t, std::pair<std::uint32_t, std::uint64_t>>> job_list(jobs.begin(),
                                                                                               jobs.end());
  run_parallel(job_list.size(), o.workers, [&](std::size_t i) {
    const auto& [fp, job] = job_list[i];
    const auto path = root / "pretrain" / (hex64(fp) + ".ckpt");
    if (fs::exists(path)) return;
    auto m = new_model(c, Strategy::intermediate, job.second);
    run_pretrain(m, leading(corpus.pretrain, job.first), seeded(c.pretrain, job.second), {});
    const auto bin = val.empty() ? NAN : train::evaluate(m, val, Mode::onboard, false).binary_iou;
    io::write_text(root / "pretrain" / (hex64(fp) + ".txt"), num_or_empty(bin) + "\n");
    train::save_checkpoint(root / "pretrain" / (hex64(fp) + ".tmp"), m, Stage::pretrain_binary);
    fs::rename(root / "pretrain" / (hex64(fp) + ".tmp"), path);  // the .ckpt appears only when complete
  });

  std::atomic<std::size_t> ran{0};
  run_parallel(cells.size(), o.workers, [&](std::size_t i) {
    const auto& cell = cells[i];
    const auto fp = hex64(cell_fingerprint(c, cell));
    const auto path = root / "cells" / (fp + ".csv");
    if (fs::exists(path)) return;
    auto m = new_model(c, cell.strategy, cell.seed);
    std::string bin_pre;
    std::vector<const Scene*> pool;
    if (cell.pretrain_scenes) {
      const auto job = hex64(pretrain_job_fingerprint(c, cell.pretrain_scenes, cell.seed));
      train::load_pretrained(root / "pretrain" / (job + ".ckpt"), m);
      bin_pre = first_line(root / "pretrain" / (job + ".txt"));
      if (cell.regime == Regime::SB) pool = leading(corpus.pretrain, cell.pretrain_scenes);
    }
    auto plan = seeded(c.finetune, cell.seed);
    plan.regime = cell.regime;
    plan.eval_every = 0;
    const auto run =
        run_finetune(m, train::examples_of(leading(corpus.finetune, cell.finetune_scenes)), plan, pool, val);
    std::string row = fp + "," + std::string(model::to_string(cell.strategy)) + "," +
                      std::string(train::to_string(cell.regime)) + "," + std::to_string(cell.pretrain_scenes) + "," +
                      std::to_string(cell.finetune_scenes) + "," + std::to_string(cell.seed) + "," +
                      kv::fmt(run.val.scores.binary_iou) + "," + kv::fmt(run.val.scores.miou) + "," + bin_pre + "," +
                      num_or_empty(run.val.binary_iou);
    for (const auto& v : run.val.scores.per_class) row += "," + opt_num(v);
    io::write_text(root / "cells" / (fp + ".tmp"), row + "\n");
    fs::rename(root / "cells" / (fp + ".tmp"), path);
    ++ran;
  });

  SweepResult out;
  out.cells_run = ran;
  out.cells_cached = cells.size() - ran;
  const auto cfg_fp = hex64(experiment_fingerprint(c));
  out.csv = sweep_header(k) + "\n";
  struct Acc {
    std::size_t n = 0;
    double iou = 0, miou = 0, bin = 0;
    std::size_t bin_n = 0;
  };
  std::vector<std::pair<std::string, Acc>> groups;
  for (const auto& cell : cells) {
    const auto row = first_line(root / "cells" / (hex64(cell_fingerprint(c, cell)) + ".csv"));
    out.csv += cfg_fp + "," + row + "\n";
    const auto fields = csv_fields(row);
    require(fields.size() == 10u + k, ErrorKind::truncated, "sweep cell file for " + fields[0] + " is malformed");
    const auto key = std::string(model::to_string(cell.strategy)) + "," + std::string(train::to_string(cell.regime)) +
                     "," + std::to_string(cell.pretrain_scenes) + "," + std::to_string(cell.finetune_scenes);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) it = groups.insert(groups.end(), {key, Acc{}});
    it->second.n += 1;
    it->second.iou += kv::to_double(fields[6], "iou");
    it->second.miou += kv::to_double(fields[7], "miou");
    if (!fields[9].empty()) {
      it->second.bin += kv::to_double(fields[9], "binary_iou_final");
      ++it->second.bin_n;
    }
  }
  out.summary = summary_header() + "\n";
  for (const auto& [key, a] : groups)
    out.summary += key + "," + std::to_string(a.n) + "," + kv::fmt(a.iou / a.n) + "," + kv::fmt(a.miou / a.n) + "," +
                   (a.bin_n ? kv::fmt(a.bin / a.bin_n) : "") + "\n";
  io::write_text(root / "sweep.csv", out.csv);
  io::write_text(root / "summary.csv", out.summary);
  write_run_info(root, c, {"sweep", c.model.strategy, "", 0, cells.size(), ""}, {"sweep.csv", "summary.csv"});
  return out;
}

// ------------------------------------------------------------ export-bev

struct BevSource {
  std::filesystem::path grid;        // a stored grid file, or
  std::filesystem::path checkpoint;  // a model predicting ...
  std::string scene;                 // ... this dataset scene
  std::optional<std::uint32_t> slice;
};

inline std::filesystem::path cmd_export_bev(const ExperimentConfig& c, const CommandOptions& o, const BevSource& src,
                                            std::filesystem::path image) {
  require(src.grid.empty() != src.checkpoint.empty(), ErrorKind::invalid_argument,
          "export-bev takes either a grid file or a checkpoint with a scene");
  AnyGrid grid;
  if (!src.grid.empty()) {
    grid = load_grid(src.grid, c.data.params.num_classes);
  } else {
    require(!src.scene.empty(), ErrorKind::invalid_argument, "export-bev with a checkpoint needs a scene id");
    check_source(c, o, src.checkpoint);
    auto strategy = c.model.strategy;
    if (const auto info = read_run_info(src.checkpoint.parent_path()))
      strategy = model::parse_strategy(info->get("strategy"));
    nn::CheckpointHeader h;
    nn::load_arrays(src.checkpoint, &h);
    auto m = new_model(c, strategy, o.seed);
    train::load_checkpoint(src.checkpoint, m);
    Split split{};
    const auto scene = load_scene(data_dir(c, o) / src.scene, &split);
    nn::NoGradGuard ng;
    if (h.stage == static_cast<std::uint8_t>(Stage::pretrain_binary)) {
      grid = m.decode_binary(m.forward_binary(scene.views, scene.rig));
    } else {
      const auto mode = h.stage == static_cast<std::uint8_t>(Stage::offboard) ? Mode::offboard : Mode::onboard;
      grid = m.decode(m.forward(scene.views, scene.rig, mode, &scene.binary), mode, &scene.binary);
    }
  }
  const auto img = bev_image(grid, src.slice);
  if (image.empty()) {
    const auto base = src.grid.empty() ? src.checkpoint.parent_path() / ("bev_" + src.scene) : src.grid;
    image = base;
    image.replace_extension(img.channels == 1 ? ".pgm" : ".ppm");
  }
  require(o.force || !std::filesystem::exists(image), ErrorKind::io,
          image.string() + " already exists; pass --force to overwrite");
  io::write_file(image, encode_netpbm(img));
  return image;
}

}  // namespace b2s::harness
