#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "b2s/harness/commands.hpp"

namespace {

using namespace b2s;
using namespace b2s::harness;
namespace fs = std::filesystem;

// 20 scenes, a narrow network and two epochs per stage.
constexpr const char* kSmoke = R"(
name = smoke
seeds = 0 1
data.pretrain = 8
data.finetune = 8
data.val = 4
data.lidar_rings = 16
data.lidar_rays = 1024
data.sweeps = 3
model.compact = 8 8 2
model.z_up = 2 2
model.encoder_channels = 4
model.channels = 8
model.mid_channels = 8
model.full_channels = 8
model.mlp_hidden = 16
model.heads = 2
model.dense_layers = 1
model.depth_bins = 8
pretrain.epochs = 2
pretrain.batch = 2
finetune.epochs = 2
finetune.batch = 2
offboard.epochs = 2
offboard.batch = 2
student.epochs = 2
student.batch = 2
autolabel.gt_scenes = 4
autolabel.pseudo_scenes = 4
sweep.pretrain_counts = 0 8
)";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("b2s_harness_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

// The smoke config with some keys replaced or added (duplicate keys are an error).
ExperimentConfig smoke(const std::string& overrides = "") {
  auto d = kv::Document::parse(kSmoke);
  const auto o = kv::Document::parse(overrides);
  for (const auto& k : o.keys()) d.set(k, o.get(k));
  return parse_experiment(d.str());
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::io;
}

// One generated dataset with pretrain, finetune and offboard runs, shared by
// the tests below.
struct Workspace {
  ExperimentConfig cfg = smoke();
  CommandOptions opt;
  fs::path pretrain, finetune, offboard;
  double seconds = 0;

  ~Workspace() { fs::remove_all(opt.out); }

  Workspace() {
    opt.out = scratch("shared");
    const auto t0 = std::chrono::steady_clock::now();
    cmd_gen_data(cfg, opt);
    pretrain = cmd_pretrain(cfg, opt) / "model.ckpt";
    finetune = cmd_finetune(cfg, opt, pretrain) / "model.ckpt";
    cmd_eval(cfg, opt, finetune, Split::val);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    offboard = cmd_offboard(cfg, opt) / "model.ckpt";
  }
};

const Workspace& ws() {
  static const Workspace w;
  return w;
}

TEST(HarnessConfig, RejectsUnknownKeys) {
  EXPECT_EQ(kind_of([] { parse_experiment("name = x\nmodel.chanels = 8\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_experiment("bogus = 1\n"); }), ErrorKind::config);
}

TEST(HarnessConfig, CrossFieldChecks) {
  EXPECT_EQ(kind_of([] { smoke("autolabel.gt_scenes = 9\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { smoke("sweep.regimes = S+B\n"); }), ErrorKind::config);  // count 0 with S+B
  EXPECT_EQ(kind_of([] { smoke("sweep.strategies = replacing\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { smoke("seeds =\n"); }), ErrorKind::config);
  EXPECT_NO_THROW(smoke("sweep.strategies = replacing\nsweep.regimes = S\n"));
}

TEST(HarnessConfig, FingerprintFollowsContentNotLayout) {
  const auto a = smoke();
  std::string reversed = "# same keys, reverse order\n";
  for (const auto& k : kv::Document::parse(kSmoke).keys())
    reversed.insert(0, k + " = " + kv::Document::parse(kSmoke).get(k) + "   # trailing comment\n");
  const auto b = parse_experiment(reversed);
  EXPECT_EQ(experiment_fingerprint(a), experiment_fingerprint(b));
  EXPECT_NE(experiment_fingerprint(a), experiment_fingerprint(smoke("finetune.lr = 0.002\n")));
  // The canonical rendering parses back to the same config.
  EXPECT_EQ(experiment_fingerprint(parse_experiment(render_experiment(a))), experiment_fingerprint(a));
}

TEST(HarnessGenData, DeterministicWithRequestedSplits) {
  const auto cfg = smoke();
  CommandOptions a{scratch("gen_a")}, b{scratch("gen_b")};
  cmd_gen_data(cfg, a);
  cmd_gen_data(cfg, b);
  EXPECT_EQ(io::read_text(data_dir(cfg, a) / "dataset.txt"), io::read_text(data_dir(cfg, b) / "dataset.txt"));
  const auto idx = load_dataset_index(data_dir(cfg, a));
  EXPECT_EQ(idx.of(Split::pretrain_binary).size(), 8u);
  EXPECT_EQ(idx.of(Split::finetune_semantic).size(), 8u);
  EXPECT_EQ(idx.of(Split::val).size(), 4u);
  EXPECT_EQ(kind_of([&] { cmd_gen_data(cfg, a); }), ErrorKind::io);
  a.force = true;
  EXPECT_NO_THROW(cmd_gen_data(cfg, a));
  fs::remove_all(a.out);
  fs::remove_all(b.out);
}

TEST(HarnessGenData, ReloadedScenesEqualGenerated) {
  const auto& w = ws();
  const auto disk = load_corpus(w.cfg, w.opt);
  const auto mem = generate_corpus(w.cfg.data);
  for (auto s : {Split::pretrain_binary, Split::finetune_semantic, Split::val}) {
    ASSERT_EQ(disk.of(s).size(), mem.of(s).size());
    for (std::size_t i = 0; i < mem.of(s).size(); ++i) EXPECT_TRUE(disk.of(s)[i] == mem.of(s)[i]);
  }
}

TEST(HarnessGenData, CorpusFromAnotherConfigIsRefused) {
  const auto& w = ws();
  EXPECT_EQ(kind_of([&] { load_corpus(smoke("data.seed = 5\n"), w.opt); }), ErrorKind::fingerprint_mismatch);
}

TEST(HarnessChain, SmokeRunFinishesQuickly) {
  const auto& w = ws();
  EXPECT_LT(w.seconds, 600.0);
  for (const auto& f : {"model.ckpt", "train_log.csv", "timing.csv", "run.txt"})
    EXPECT_TRUE(fs::exists(w.finetune.parent_path() / f)) << f;
  const auto info = read_run_info(w.finetune.parent_path());
  ASSERT_TRUE(info);
  EXPECT_EQ(info->get("config_fingerprint"), hex64(experiment_fingerprint(w.cfg)));
  EXPECT_EQ(info->get("artifact.model.ckpt"), file_hash(w.finetune));
}

TEST(HarnessChain, FinetuneRefusesCheckpointFromAnotherConfig) {
  const auto& w = ws();
  const auto other = smoke("finetune.lr = 0.002\n");
  auto o = w.opt;
  o.seed = 7;
  EXPECT_EQ(kind_of([&] { cmd_finetune(other, o, w.pretrain); }), ErrorKind::fingerprint_mismatch);
  // A different architecture is refused by the checkpoint itself, even forced.
  const auto wide = smoke("model.channels = 16\n");
  CommandOptions g{scratch("wide"), 0, false, 1};
  cmd_gen_data(wide, g);
  g.force = true;
  EXPECT_EQ(kind_of([&] { cmd_finetune(wide, g, w.pretrain); }), ErrorKind::fingerprint_mismatch);
  fs::remove_all(g.out);
}

TEST(HarnessChain, AutolabelNeedsOffboardCheckpoint) {
  const auto& w = ws();
  auto o = w.opt;
  o.seed = 3;
  EXPECT_EQ(kind_of([&] { cmd_autolabel(w.cfg, o, w.pretrain); }), ErrorKind::mode_mismatch);
  EXPECT_EQ(kind_of([&] { cmd_autolabel(w.cfg, o, w.finetune); }), ErrorKind::mode_mismatch);
  const auto labels = cmd_autolabel(w.cfg, o, w.offboard);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(labels)) files += e.path().extension() == ".b2sp";
  EXPECT_EQ(files, 4u);
  const auto student = cmd_student(w.cfg, o, labels, w.pretrain);
  EXPECT_TRUE(fs::exists(student / "model.ckpt"));
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto nl = s.find('\n', pos);
    out.push_back(s.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

TEST(HarnessEval, RepeatableWithOneColumnPerClass) {
  const auto& w = ws();
  const auto a = cmd_eval(w.cfg, w.opt, w.finetune, Split::val);
  const auto b = cmd_eval(w.cfg, w.opt, w.finetune, Split::val);
  EXPECT_EQ(a, b);
  const auto rows = lines(a);
  ASSERT_EQ(rows.size(), 2u);
  const auto header = csv_fields(rows[0]);
  std::size_t per_class = 0;
  for (const auto& h : header) per_class += h.starts_with("iou_class_");
  EXPECT_EQ(per_class, w.cfg.data.params.num_classes);
  EXPECT_EQ(csv_fields(rows[1]).size(), header.size());
}

TEST(HarnessEval, ValuesMatchBruteForceCounts) {
  const auto& w = ws();
  const auto row = csv_fields(lines(cmd_eval(w.cfg, w.opt, w.finetune, Split::val))[1]);
  const auto corpus = load_corpus(w.cfg, w.opt);
  auto m = new_model(w.cfg, w.cfg.model.strategy, 0);
  train::load_checkpoint(w.finetune, m);
  const auto k = w.cfg.data.params.num_classes;
  std::vector<std::uint64_t> inter(k + 1), uni(k + 1);
  std::uint64_t occ_inter = 0, occ_union = 0;
  nn::NoGradGuard ng;
  for (const auto& s : corpus.val) {
    const auto pred = m.decode(m.forward(s.views, s.rig, Mode::onboard), Mode::onboard);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto p = pred.at(i), g = s.semantic.at(i);
      occ_inter += p && g;
      occ_union += p || g;
      for (std::uint8_t c = 1; c <= k; ++c) {
        inter[c] += p == c && g == c;
        uni[c] += p == c || g == c;
      }
    }
  }
  double sum = 0;
  int present = 0;
  for (std::uint8_t c = 1; c <= k; ++c) {
    const auto& cell = row[7 + c];
    if (uni[c] == 0) {
      EXPECT_TRUE(cell.empty());
      continue;
    }
    const double iou = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    EXPECT_EQ(kv::to_double(cell, "iou"), iou) << "class " << int(c);
    sum += iou;
    ++present;
  }
  EXPECT_NEAR(kv::to_double(row[6], "miou"), sum / present, 1e-15);
  EXPECT_EQ(kv::to_double(row[5], "iou"), static_cast<double>(occ_inter) / static_cast<double>(occ_union));
}

TEST(HarnessEval, RefusesRunFromAnotherConfigUnlessForced) {
  const auto& w = ws();
  auto other = smoke("offboard.lr = 0.003\n");
  EXPECT_EQ(kind_of([&] { cmd_eval(other, w.opt, w.finetune, Split::val); }), ErrorKind::fingerprint_mismatch);
  auto forced = w.opt;
  forced.force = true;
  EXPECT_NO_THROW(cmd_eval(other, forced, w.finetune, Split::val));
  cmd_eval(w.cfg, w.opt, w.finetune, Split::val);  // leave the file as the shared run wrote it
}

TEST(HarnessSweep, RowsResumeAndMeans) {
  const auto& w = ws();
  auto cfg = smoke("sweep.strategies = intermediate multi_head\n");
  auto o = w.opt;
  o.out = scratch("sweep");
  fs::create_directories(o.out);
  fs::create_directory_symlink(fs::absolute(data_dir(w.cfg, w.opt)), o.out / "data");
  o.workers = 2;
  const auto first = cmd_sweep(cfg, o);
  // counts {0, N} x 2 seeds per strategy
  const auto rows = lines(first.csv);
  EXPECT_EQ(rows.size(), 1u + 2 * 2 * 2);
  EXPECT_EQ(first.cells_run, 8u);

  // Drop one finished cell: only that cell runs again, and the table is unchanged.
  fs::remove(o.out / "sweep" / "cells" / (csv_fields(rows[3])[1] + ".csv"));
  o.workers = 1;
  const auto again = cmd_sweep(cfg, o);
  EXPECT_EQ(again.cells_run, 1u);
  EXPECT_EQ(again.cells_cached, 7u);
  EXPECT_EQ(again.csv, first.csv);

  // Means over seeds recomputed from the long-form rows.
  std::map<std::string, std::pair<double, int>> miou;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = csv_fields(rows[i]);
    auto& acc = miou[f[2] + "," + f[3] + "," + f[4] + "," + f[5]];
    acc.first += kv::to_double(f[8], "miou");
    acc.second += 1;
  }
  const auto summary = lines(first.summary);
  ASSERT_EQ(summary.size(), 1u + miou.size());
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto f = csv_fields(summary[i]);
    const auto& acc = miou.at(f[0] + "," + f[1] + "," + f[2] + "," + f[3]);
    EXPECT_EQ(std::stoi(f[4]), acc.second);
    EXPECT_DOUBLE_EQ(kv::to_double(f[6], "mean_miou"), acc.first / acc.second);
  }
  fs::remove_all(o.out);
}

TEST(HarnessSweep, CellMatchesStandaloneFinetune) {
  // The sweep cell (pretrain 8, seed 0) runs the same job as pretrain then finetune.
  const auto& w = ws();
  auto o = w.opt;
  o.out = scratch("sweep_single");
  fs::create_directories(o.out);
  fs::create_directory_symlink(fs::absolute(data_dir(w.cfg, w.opt)), o.out / "data");
  const auto cfg = smoke("seeds = 0\nsweep.pretrain_counts = 8\n");
  auto fw = w.opt;
  fw.out = scratch("sweep_single_chain");
  fs::create_directories(fw.out);
  fs::create_directory_symlink(fs::absolute(data_dir(w.cfg, w.opt)), fw.out / "data");
  const auto pre = cmd_pretrain(cfg, fw) / "model.ckpt";
  const auto eval = csv_fields(lines(cmd_eval(cfg, fw, cmd_finetune(cfg, fw, pre) / "model.ckpt", Split::val))[1]);
  const auto row = csv_fields(lines(cmd_sweep(cfg, o).csv)[1]);
  EXPECT_EQ(row[8], eval[6]);  // miou
  EXPECT_EQ(row[7], eval[5]);  // iou
  fs::remove_all(o.out);
  fs::remove_all(fw.out);
}

TEST(HarnessBev, AllFreeGridIsUniformBackground) {
  const GridSpec spec{5, 7, 3, 0.5f, {0, 0, 0}};
  const auto sem = bev_image(SemanticGrid(spec, 4));
  EXPECT_EQ(sem.width, 7u);
  EXPECT_EQ(sem.height, 5u);
  EXPECT_TRUE(std::all_of(sem.pixels.begin(), sem.pixels.end(), [](auto v) { return v == 0; }));
  const auto bin = bev_image(BinaryGrid(spec));
  EXPECT_TRUE(std::all_of(bin.pixels.begin(), bin.pixels.end(), [](auto v) { return v == 0; }));
}

TEST(HarnessBev, PixelCarriesPaletteOfMaxOverZ) {
  const GridSpec spec{4, 6, 5, 0.5f, {0, 0, 0}};
  Rng rng(11);
  SemanticGrid g(spec, 4);
  for (std::size_t i = 0; i < g.size(); ++i) g.set(i, static_cast<std::uint8_t>(rng.integer(0, 4)));
  const auto img = bev_image(g);
  const auto slice = bev_image(g, 2u);
  for (std::uint32_t h = 0; h < 4; ++h)
    for (std::uint32_t w = 0; w < 6; ++w) {
      std::uint8_t top = 0;
      for (std::uint32_t z = 0; z < 5; ++z) top = std::max(top, g.at(VoxelCoord{h, w, z}));
      const auto c = palette_color(top);
      EXPECT_TRUE(std::equal(c.begin(), c.end(), img.pixel(h, w).begin()));
      const auto s = palette_color(g.at(VoxelCoord{h, w, 2}));
      EXPECT_TRUE(std::equal(s.begin(), s.end(), slice.pixel(h, w).begin()));
    }
  EXPECT_EQ(kind_of([&] { bev_image(g, 5u); }), ErrorKind::invalid_argument);
  // Distinct classes get distinct colours.
  std::set<std::array<std::uint8_t, 3>> colours;
  for (std::uint8_t l = 0; l <= 4; ++l) colours.insert(palette_color(l));
  EXPECT_EQ(colours.size(), 5u);
}

TEST(HarnessBev, NetpbmRoundTrip) {
  const GridSpec spec{3, 4, 2, 0.5f, {0, 0, 0}};
  BinaryGrid b(spec);
  b.set(VoxelCoord{1, 2, 1});
  const auto img = bev_image(b);
  const auto back = decode_netpbm(encode_netpbm(img));
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(back.channels, 1u);
  EXPECT_EQ(back.pixel(1, 2)[0], kOccupiedGray);
  EXPECT_EQ(kind_of([] { decode_netpbm(io::Bytes{'P', '3', '\n'}); }), ErrorKind::bad_magic);
}

TEST(HarnessBev, ExportsStoredGridsAndPredictions) {
  const auto& w = ws();
  const auto corpus = load_corpus(w.cfg, w.opt);
  const auto scene_dir = data_dir(w.cfg, w.opt) / corpus.id(Split::val, 0);
  const auto out = scratch("bev");
  fs::create_directories(out);
  const auto sem = cmd_export_bev(w.cfg, w.opt, {scene_dir / "semantic.grid", {}, {}, {}}, out / "s.ppm");
  const auto img = decode_netpbm(io::read_file(sem));
  EXPECT_EQ(img.pixels, bev_image(corpus.val[0].semantic).pixels);
  EXPECT_EQ(kind_of([&] { cmd_export_bev(w.cfg, w.opt, {scene_dir / "semantic.grid", {}, {}, {}}, out / "s.ppm"); }),
            ErrorKind::io);
  const auto pred = cmd_export_bev(w.cfg, w.opt, {{}, w.finetune, corpus.id(Split::val, 0), {}}, out / "p.ppm");
  EXPECT_EQ(decode_netpbm(io::read_file(pred)).channels, 3u);
  const auto bin = cmd_export_bev(w.cfg, w.opt, {{}, w.pretrain, corpus.id(Split::val, 0), 1u}, out / "b.pgm");
  EXPECT_EQ(decode_netpbm(io::read_file(bin)).channels, 1u);
  fs::remove_all(out);
}

}  // namespace
