// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end. Subcommands: gen-data, train, eval, ablate,
// gradcheck, plot. Exit codes: 0 success, 1 validation error, 2 numerical
// failure (non-finite loss abort, gradient check failure).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgpseg/gradcheck.hpp"
#include "sgpseg/harness.hpp"
#include "sgpseg/synthdata.hpp"

namespace fs = std::filesystem;
using namespace sgpseg;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string*>> overrides;
  std::vector<std::string> extra;  // raw key=value pairs from --set

  // Storage for every flag so pointers stay valid.
  std::string name, seed, lr, epochs, batch_size, dataset, out_dir, val_fraction;
  std::string sgpm_position, sgpm_layers, estimator, gate_temp, gate_temp_final;
  std::string focal_alpha, focal_gamma, combine_lambda, size_weighting;
  std::string patch_size, embed_channels, num_blocks, heads, mlp_ratio, msfb_compression;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_path, "TOML-style config file");
  auto opt = [&](const std::string& flag, std::string& slot, const std::string& key,
                 const std::string& help) {
    f.overrides.emplace_back(key, &slot);
    cmd->add_option(flag, slot, help);
  };
  opt("--name", f.name, "name", "run name (output subdirectory)");
  opt("--seed", f.seed, "seed", "run seed");
  opt("--lr", f.lr, "lr", "learning rate (default 8e-4)");
  opt("--epochs", f.epochs, "epochs", "training epochs (default 40)");
  opt("--batch-size", f.batch_size, "batch_size", "batch size (default 2)");
  opt("--dataset", f.dataset, "dataset_dir", "dataset directory with manifests");
  opt("--out-dir", f.out_dir, "out_dir", "output root (default runs)");
  opt("--val-fraction", f.val_fraction, "val_fraction", "held-out slice fraction");
  opt("--sgpm-position", f.sgpm_position, "encoder.sgpm_position",
      "gated-module position: a|b|c (end|begin|both)");
  opt("--sgpm-layers", f.sgpm_layers, "encoder.sgpm_layers",
      "gated-module block range i-j, or none");
  opt("--patch-size", f.patch_size, "encoder.patch_size", "patch size (power of two)");
  opt("--embed-channels", f.embed_channels, "encoder.embed_channels", "encoder width");
  opt("--num-blocks", f.num_blocks, "encoder.num_blocks", "encoder depth");
  opt("--heads", f.heads, "encoder.attention_heads", "attention heads");
  opt("--mlp-ratio", f.mlp_ratio, "encoder.mlp_ratio", "MLP expansion ratio");
  opt("--msfb-compression", f.msfb_compression, "encoder.msfb_compression",
      "fusion-block channel compression ratio");
  opt("--estimator", f.estimator, "gate.estimator", "gate estimator: soft|st");
  opt("--gate-temp", f.gate_temp, "gate.temperature", "gate temperature");
  opt("--gate-temp-final", f.gate_temp_final, "gate.temperature_final",
      "final gate temperature (linear anneal)");
  opt("--focal-alpha", f.focal_alpha, "loss.focal_alpha", "focal positive-class weight");
  opt("--focal-gamma", f.focal_gamma, "loss.focal_gamma", "focal focusing exponent");
  opt("--combine-lambda", f.combine_lambda, "loss.combine_lambda",
      "focal-term weight relative to Dice");
  opt("--size-weighting", f.size_weighting, "loss.size_weighting",
      "lesion-size weighting: off|inverse_fraction");
  cmd->add_option("--set", f.extra, "extra key=value config overrides")
      ->take_all();
}

RunConfig resolve_config(CLI::App* cmd, const ConfigFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = parse_run_config_file(f.config_path);
  for (const auto& [key, slot] : f.overrides) {
    // CLI11 leaves unset options empty; an empty string is never a valid value
    // for any of these keys.
    if (!slot->empty()) apply_config_kv(cfg, key, *slot);
  }
  for (const std::string& kv : f.extra) {
    auto eq = kv.find('=');
    SGPSEG_CHECK(eq != std::string::npos, "--set expects key=value, got '" << kv << "'");
    apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  (void)cmd;
  return cfg;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"self-gated promptable 3D lesion segmentation workbench"};
  app.require_subcommand(1);

  // gen-data ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic lesion dataset");
  std::string gen_out = "data";
  std::vector<int> gen_shape = {32};
  std::vector<double> gen_fraction = {0.005, 0.02};
  std::string gen_family = "ellipsoid";
  double gen_contrast = 2.0;
  double gen_sigma = 1.0;
  int gen_count = 100;
  uint64_t gen_seed = 0;
  int gen_fg = 1;
  int gen_bg = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--shape", gen_shape, "volume shape (1 or 3 extents)")->expected(1, 3);
  gen->add_option("--fraction", gen_fraction, "lesion fraction range lo hi")->expected(2);
  gen->add_option("--family", gen_family, "lesion shape family: ellipsoid|lobulated");
  gen->add_option("--contrast", gen_contrast, "lesion contrast in noise-sigma units");
  gen->add_option("--noise-sigma", gen_sigma, "background noise sigma");
  gen->add_option("--count", gen_count, "number of samples");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--prompts-fg", gen_fg, "frozen foreground prompts per sample");
  gen->add_option("--prompts-bg", gen_bg, "frozen background prompts per sample");

  // train ---------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a model");
  ConfigFlags train_flags;
  add_config_flags(tr, train_flags);

  // eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  EvalOptions eval_options;
  ev->add_option("--checkpoint", eval_options.checkpoint, "checkpoint stem or .json")
      ->required();
  ev->add_option("--manifest", eval_options.manifest, "test manifest path")->required();
  ev->add_option("--out", eval_options.out_path, "eval.json output path");
  ev->add_option("--threshold", eval_options.threshold, "binarization threshold");
  ev->add_option("--expect-prompt-hash", eval_options.expect_prompt_hash,
                 "fail unless the combined prompt hash matches");

  // ablate --------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "run the position x depth ablation grid");
  ConfigFlags ablate_flags;
  add_config_flags(ab, ablate_flags);
  std::string ab_positions = "a,b,c";
  std::string ab_ranges = "1-1,1-2,1-3,1-4";
  int ab_reps = 1;
  bool ab_summary = false;
  ab->add_option("--positions", ab_positions, "comma-separated positions (a,b,c)");
  ab->add_option("--ranges", ab_ranges, "comma-separated layer ranges (i-j)");
  ab->add_option("--reps", ab_reps, "repetitions (seed offsets) per cell");
  ab->add_flag("--summary", ab_summary, "also run baseline / +sgpm / +sgpm+zoom rows");

  // gradcheck -------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string gc_component = "all";
  int gc_seeds = 10;
  uint64_t gc_seed0 = 0;
  gc->add_option("--component", gc_component, "sgpm|msfb|loss|end_to_end|all");
  gc->add_option("--seeds", gc_seeds, "number of seeds per component");
  gc->add_option("--seed", gc_seed0, "base seed");

  // plot ------------------------------------------------------------------
  auto* pl = app.add_subcommand("plot", "emit SVG charts for a run or ablation");
  std::string plot_run;
  std::string plot_ablation;
  pl->add_option("--run", plot_run, "run directory (metrics.csv)");
  pl->add_option("--ablation", plot_ablation, "ablation directory (ablation_chart.json)");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    GenSpec spec;
    if (gen_shape.size() == 1) {
      spec.volume_shape = {gen_shape[0], gen_shape[0], gen_shape[0]};
    } else if (gen_shape.size() == 3) {
      spec.volume_shape = {gen_shape[0], gen_shape[1], gen_shape[2]};
    } else {
      throw ValidationError("--shape expects 1 or 3 extents");
    }
    spec.fraction_lo = gen_fraction[0];
    spec.fraction_hi = gen_fraction[1];
    spec.shape_family = parse_shape_family(gen_family);
    spec.intensity_contrast = gen_contrast;
    spec.noise_sigma = gen_sigma;
    spec.count = gen_count;
    spec.seed = gen_seed;
    auto manifests = generate_dataset(spec, gen_out, gen_fg, gen_bg);
    std::printf("wrote %zu train / %zu test samples under %s\n",
                manifests[0].entries.size(), manifests[1].entries.size(), gen_out.c_str());
    return 0;
  }

  if (tr->parsed()) {
    RunConfig cfg = resolve_config(tr, train_flags);
    TrainOutcome out = train(cfg);
    if (!out.ok) {
      std::fprintf(stderr, "training aborted: %s\n", out.diagnostic.c_str());
      return 2;
    }
    std::printf("trained %d epochs; final loss %.6g", out.epochs_completed, out.final_loss);
    if (out.final_val_mdice >= 0.0) {
      std::printf("; val mIoU %.4f mDice %.4f", out.final_val_miou, out.final_val_mdice);
    }
    std::printf("\nrun dir: %s\n", out.run_dir.c_str());
    return 0;
  }

  if (ev->parsed()) {
    EvalOutcome out = evaluate(eval_options);
    std::printf("mIoU %.6f mDice %.6f over %zu samples\n", out.report.miou,
                out.report.mdice, out.report.per_sample.size());
    std::printf("gate open rate %.3f; fusion flops %lld / %lld\n",
                out.stats.overall_open_rate,
                static_cast<long long>(out.stats.msfb_flops_executed),
                static_cast<long long>(out.stats.msfb_flops_potential));
    std::printf("prompt hash %s\n", out.prompt_hash_combined.c_str());
    return 0;
  }

  if (ab->parsed()) {
    AblationGrid grid;
    grid.base = resolve_config(ab, ablate_flags);
    if (grid.base.name == "run") grid.base.name = "ablation";
    std::stringstream pos_ss(ab_positions);
    std::string token;
    while (std::getline(pos_ss, token, ',')) {
      if (!token.empty()) grid.positions.push_back(parse_sgpm_position(token));
    }
    std::stringstream rng_ss(ab_ranges);
    while (std::getline(rng_ss, token, ',')) {
      if (!token.empty()) grid.ranges.push_back(parse_layer_range(token));
    }
    grid.repetitions = ab_reps;
    grid.with_summary = ab_summary;
    AblationOutcome out = ablate(grid);
    std::printf("%zu cells -> %s/ablation.csv\n", out.cells.size(), out.out_dir.c_str());
    for (const AblationCell& c : out.cells) {
      std::printf("  %-5s %-4s mIoU %.4f mDice %.4f open %.2f\n",
                  to_string(c.position).c_str(), c.range.str().c_str(), c.miou, c.mdice,
                  c.open_rate);
    }
    for (const SummaryRow& r : out.summary) {
      std::printf("  %-12s mIoU %.4f mDice %.4f\n", r.setting.c_str(), r.miou, r.mdice);
    }
    return 0;
  }

  if (gc->parsed()) {
    std::vector<std::string> components;
    if (gc_component == "all") {
      components = gradcheck_component_names();
    } else {
      components.push_back(gc_component);
    }
    bool all_passed = true;
    for (const std::string& component : components) {
      for (int s = 0; s < gc_seeds; ++s) {
        GradCheckReport r = gradcheck_component(component, gc_seed0 + s);
        all_passed = all_passed && r.passed;
        std::printf("[%s] %-10s seed %llu: max rel err %.3e over %lld checks (%.2fs)%s\n",
                    r.passed ? "PASS" : "FAIL", r.component.c_str(),
                    static_cast<unsigned long long>(r.seed), r.max_rel_err,
                    static_cast<long long>(r.checks), r.elapsed_seconds,
                    r.passed ? "" : (" worst " + r.worst).c_str());
      }
    }
    return all_passed ? 0 : 2;
  }

  if (pl->parsed()) {
    SGPSEG_CHECK(!plot_run.empty() || !plot_ablation.empty(),
                 "plot: pass --run and/or --ablation");
    if (!plot_run.empty()) {
      write_run_plots(plot_run);
      std::printf("wrote %s/plots\n", plot_run.c_str());
    }
    if (!plot_ablation.empty()) {
      write_ablation_plot(plot_ablation);
      std::printf("wrote %s/plots\n", plot_ablation.c_str());
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
