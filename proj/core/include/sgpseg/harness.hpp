// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: training loop, evaluation, the ablation grid,
// and plot emission. Every run writes
//   <out_dir>/<name>/{config.echo, checkpoint.bin, checkpoint.json,
//                     metrics.csv, gates.csv, eval.json, plots/}
// and is fully reproducible from (config, seed).

#pragma once

#include <array>
#include <string>
#include <vector>

#include "sgpseg/config.hpp"
#include "sgpseg/metrics.hpp"

namespace sgpseg {

struct TrainOutcome {
  bool ok = false;  // false: aborted on a non-finite loss (exit code 2)
  std::string run_dir;
  int epochs_completed = 0;
  std::string diagnostic;
  double final_loss = 0.0;
  double final_val_miou = -1.0;
  double final_val_mdice = -1.0;
};

// Trains under `config`; the dataset directory must contain
// train_manifest.json. A checkpoint is written after initialization and
// after every epoch, so an abort always leaves a loadable last-good
// checkpoint plus an ABORTED.txt diagnostic.
TrainOutcome train(const RunConfig& config);

struct EvalOptions {
  std::string checkpoint;  // stem or .json path
  std::string manifest;
  std::string out_path;    // eval.json destination; empty = don't write
  double threshold = 0.5;
  std::string expect_prompt_hash;  // non-empty: fail unless combined hash matches
};

struct EvalOutcome {
  EvalReport report;
  GateStats stats;
  std::string prompt_hash_combined;
};

EvalOutcome evaluate(const EvalOptions& options);

struct AblationGrid {
  std::vector<SgpmPosition> positions;
  std::vector<SgpmLayerRange> ranges;
  int repetitions = 1;
  RunConfig base;             // name becomes the ablation directory
  bool with_summary = false;  // adds baseline / +SGPM / +SGPM+Zoom rows
};

struct AblationCell {
  SgpmPosition position;
  SgpmLayerRange range;
  double miou = 0.0;
  double mdice = 0.0;
  double open_rate = 0.0;
};

struct SummaryRow {
  std::string setting;
  double miou = 0.0;
  double mdice = 0.0;
};

struct AblationOutcome {
  std::vector<AblationCell> cells;  // one per (position, range), mean over reps
  std::vector<SummaryRow> summary;
  std::string out_dir;
  std::string prompt_hash;  // shared across all cells (fairness check)
};

// Runs one train+evaluate cycle per cell; writes ablation.csv,
// ablation_cells.csv, ablation_chart.json and (with_summary) summary.csv.
AblationOutcome ablate(const AblationGrid& grid);

// Loss and validation-Dice curves from a run's metrics.csv into
// <run_dir>/plots/.
void write_run_plots(const std::string& run_dir);

// Grouped bars per position panel from ablation_chart.json.
void write_ablation_plot(const std::string& ablation_dir);

}  // namespace sgpseg
