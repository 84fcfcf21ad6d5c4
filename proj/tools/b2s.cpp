// b2s: data generation, training stages, evaluation, sweeps and BEV export.
//
//   b2s gen-data  --config exp.txt
//   b2s pretrain  --config exp.txt --seed 0
//   b2s finetune  --config exp.txt --seed 0 --from runs/seed0/pretrain/model.ckpt
//   b2s eval      --config exp.txt --checkpoint runs/seed0/finetune/model.ckpt --split val
//
// Failures print `error[<category>]: <message>` and exit nonzero.

#include <CLI11.hpp>

#include <iostream>

#include "b2s/harness/commands.hpp"

namespace {

using namespace b2s;
using namespace b2s::harness;

struct Args {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool force = false;
  std::uint32_t workers = 1;
  std::string from, labels, checkpoint, split = "val", grid, scene, image;
  std::optional<std::uint32_t> z;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "experiment config file")->required();
  cmd->add_option("--out", a.out, "output root (default: the config's out key)");
  cmd->add_option("--seed", a.seed, "run seed");
  cmd->add_flag("--force", a.force, "overwrite existing outputs, accept fingerprint mismatches");
  cmd->add_option("--workers", a.workers, "parallel sweep cells")->check(CLI::Range(1u, 256u));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binary-to-semantic occupancy experiments"};
  app.require_subcommand(1);
  Args a;
  auto* gen = app.add_subcommand("gen-data", "generate and store the dataset");
  auto* pre = app.add_subcommand("pretrain", "binary pretraining on the pretraining split");
  auto* fin = app.add_subcommand("finetune", "semantic fine-tuning, optionally from a pretrained trunk");
  auto* off = app.add_subcommand("offboard", "train the offboard model on GT-binary inputs");
  auto* lab = app.add_subcommand("autolabel", "pseudo-label pretraining scenes with an offboard model");
  auto* stu = app.add_subcommand("student", "train an onboard student on GT plus pseudo labels");
  auto* evl = app.add_subcommand("eval", "score a checkpoint on a split");
  auto* swp = app.add_subcommand("sweep", "run the sweep grid and write sweep.csv and summary.csv");
  auto* bev = app.add_subcommand("export-bev", "write a top-down PGM/PPM of a grid or a prediction");
  for (auto* cmd : {gen, pre, fin, off, lab, stu, evl, swp, bev}) add_common(cmd, a);
  fin->add_option("--from", a.from, "pretraining checkpoint");
  lab->add_option("--from", a.from, "offboard checkpoint")->required();
  stu->add_option("--labels", a.labels, "autolabel output directory")->required();
  stu->add_option("--from", a.from, "pretraining checkpoint");
  evl->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
  evl->add_option("--split", a.split, "val, finetune or pretrain");
  auto* grid_opt = bev->add_option("--grid", a.grid, "stored grid file");
  auto* ckpt_opt = bev->add_option("--checkpoint", a.checkpoint, "model checkpoint to predict with");
  grid_opt->excludes(ckpt_opt);
  bev->add_option("--scene", a.scene, "dataset scene id (with --checkpoint)")->needs(ckpt_opt);
  bev->add_option("--z", a.z, "z slice (default: max over z)");
  bev->add_option("--image", a.image, "output image path");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_experiment(a.config);
    const CommandOptions o{a.out, a.seed, a.force, a.workers};
    if (gen->parsed()) {
      cmd_gen_data(cfg, o);
      std::cout << data_dir(cfg, o).string() << "\n";
    } else if (pre->parsed()) {
      std::cout << cmd_pretrain(cfg, o).string() << "\n";
    } else if (fin->parsed()) {
      std::cout << cmd_finetune(cfg, o, a.from).string() << "\n";
    } else if (off->parsed()) {
      std::cout << cmd_offboard(cfg, o).string() << "\n";
    } else if (lab->parsed()) {
      std::cout << cmd_autolabel(cfg, o, a.from).string() << "\n";
    } else if (stu->parsed()) {
      std::cout << cmd_student(cfg, o, a.labels, a.from).string() << "\n";
    } else if (evl->parsed()) {
      std::cout << cmd_eval(cfg, o, a.checkpoint, parse_split(a.split));
    } else if (swp->parsed()) {
      const auto r = cmd_sweep(cfg, o);
      std::cout << r.summary << "cells run " << r.cells_run << ", cached " << r.cells_cached << "\n";
    } else if (bev->parsed()) {
      std::cout << cmd_export_bev(cfg, o, {a.grid, a.checkpoint, a.scene, a.z}, a.image).string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
