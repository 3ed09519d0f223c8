// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sgpseg/checkpoint.hpp"
#include "sgpseg/optimizer.hpp"
#include "sgpseg/rng.hpp"
#include "sgpseg/svg_plot.hpp"
#include "sgpseg/synthdata.hpp"
#include "sgpseg/volume_io.hpp"
#include "sgpseg/zoom_loss.hpp"

namespace fs = std::filesystem;

namespace sgpseg {

namespace {

constexpr uint64_t kTagNoise = 0x4e4fu;
constexpr uint64_t kTagOrder = 0x4f52u;

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct LoadedDataset {
  std::vector<VolumeSample> samples;
  std::vector<PromptSet> prompts;
};

LoadedDataset load_split(const DatasetManifest& manifest, int pad_multiple) {
  LoadedDataset data;
  for (const ManifestEntry& entry : manifest.entries) {
    PromptSet prompts = load_prompts(manifest, entry);
    VolumeSample sample = load_sample(manifest, entry);
    sample = pad_to_multiple(sample, pad_multiple);
    data.samples.push_back(std::move(sample));
    data.prompts.push_back(std::move(prompts));
  }
  return data;
}

struct EpochLossStats {
  double total = 0.0;
  double dice = 0.0;
  double focal = 0.0;
  double lesion_fraction = 0.0;
  double size_weight = 0.0;
  int64_t count = 0;

  void add(const LossReport& r) {
    total += r.total;
    dice += r.dice_term;
    focal += r.focal_term;
    lesion_fraction += r.lesion_fraction;
    size_weight += r.size_weight;
    ++count;
  }
};

std::string gates_csv_header() {
  return "epoch,block,position,calls,open_calls,open_rate,mean_soft_gate,mean_logit\n";
}

void append_gate_rows(std::string& csv, int epoch, const GateStats& stats) {
  for (const GateLayerStats& ls : stats.per_layer) {
    csv += std::to_string(epoch) + "," + std::to_string(ls.block) + "," +
           to_string(ls.position) + "," + std::to_string(ls.calls) + "," +
           std::to_string(ls.open_calls) + "," + g17(ls.open_rate) + "," +
           g17(ls.mean_soft_gate) + "," + g17(ls.mean_logit) + "\n";
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  SGPSEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  out << text;
}

nlohmann::json gate_stats_json(const GateStats& stats) {
  nlohmann::json layers = nlohmann::json::array();
  for (const GateLayerStats& ls : stats.per_layer) {
    layers.push_back({{"block", ls.block},
                      {"position", to_string(ls.position)},
                      {"calls", ls.calls},
                      {"open_calls", ls.open_calls},
                      {"open_rate", ls.open_rate},
                      {"mean_soft_gate", ls.mean_soft_gate},
                      {"mean_logit", ls.mean_logit}});
  }
  return {{"per_layer", layers},
          {"overall_open_rate", stats.overall_open_rate},
          {"msfb_flops_executed", stats.msfb_flops_executed},
          {"msfb_flops_potential", stats.msfb_flops_potential}};
}

}  // namespace

TrainOutcome train(const RunConfig& config) {
  config.validate();
  SGPSEG_CHECK(!config.dataset_dir.empty(), "train: dataset_dir is not set");
  const std::string train_manifest_path =
      (fs::path(config.dataset_dir) / "train_manifest.json").string();
  SGPSEG_CHECK(fs::exists(train_manifest_path),
               "train: missing manifest '" << train_manifest_path << "'");
  DatasetManifest manifest = read_manifest(train_manifest_path);
  SGPSEG_CHECK(!manifest.entries.empty(), "train: the train split is empty");

  LoadedDataset data = load_split(manifest, config.encoder.patch_size);
  const int n = static_cast<int>(data.samples.size());
  for (int i = 1; i < n; ++i) {
    SGPSEG_CHECK(data.samples[static_cast<size_t>(i)].image.same_shape(
                     data.samples[0].image),
                 "train: sample " << data.samples[static_cast<size_t>(i)].sample_id
                                  << " has a different shape from the first sample");
  }

  // Held-out validation slice: the tail of the manifest order.
  int n_val = 0;
  if (config.val_fraction > 0.0 && n >= 2) {
    n_val = std::clamp(static_cast<int>(std::lround(config.val_fraction * n)), 1, n - 1);
  }
  const int n_train = n - n_val;

  const std::array<int, 3> vshape = {data.samples[0].image.extent(0),
                                     data.samples[0].image.extent(1),
                                     data.samples[0].image.extent(2)};
  ModelParams model = ModelParams::init(config.encoder, vshape, config.seed);
  Adam adam(model, config.optimizer, config.lr);
  Rng noise(derive_seed(config.seed, kTagNoise));

  const std::string run_dir = config.run_dir();
  fs::create_directories(run_dir);
  fs::create_directories(fs::path(run_dir) / "plots");
  write_text((fs::path(run_dir) / "config.echo").string(), run_config_toml(config));
  const std::string checkpoint_stem = (fs::path(run_dir) / "checkpoint").string();
  save_checkpoint(checkpoint_stem, model, config);

  std::string metrics_csv =
      "epoch,loss_total,loss_dice,loss_focal,lesion_fraction,size_weight,val_miou,"
      "val_mdice\n";
  std::string gates_csv = gates_csv_header();

  TrainOutcome outcome;
  outcome.run_dir = run_dir;

  std::vector<Tensor*> params = adam.params();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // Linear temperature anneal across epochs.
    double t = config.epochs > 1
                   ? static_cast<double>(epoch - 1) / (config.epochs - 1)
                   : 0.0;
    model.set_gate_temperature(config.gate_temperature +
                               (config.gate_temperature_final - config.gate_temperature) *
                                   t);

    std::vector<int> order(static_cast<size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(config.seed, kTagOrder, static_cast<uint64_t>(epoch)));
    for (int i = n_train - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle.uniform_int(0, i));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    EpochLossStats stats;
    std::vector<GateTelemetry> epoch_gates;
    for (int start = 0; start < n_train; start += config.batch_size) {
      const int batch_n = std::min(config.batch_size, n_train - start);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (Tensor* p : params) grads.push_back(Tensor::zeros(p->shape()));

      for (int bi = 0; bi < batch_n; ++bi) {
        const int idx = order[static_cast<size_t>(start + bi)];
        Binder bind(true);
        ForwardResult fwd = model_forward(bind, data.samples[static_cast<size_t>(idx)],
                                          data.prompts[static_cast<size_t>(idx)], model,
                                          GateMode::train, config.estimator, &noise);
        LossGraph loss = zoom_loss_graph(fwd.prob, data.samples[static_cast<size_t>(idx)].label,
                                         config.loss);
        if (!std::isfinite(loss.report.total)) {
          outcome.ok = false;
          outcome.epochs_completed = epoch - 1;
          outcome.diagnostic =
              "non-finite loss at epoch " + std::to_string(epoch) + ", sample '" +
              data.samples[static_cast<size_t>(idx)].sample_id +
              "'; last-good checkpoint is from the previous epoch";
          write_text((fs::path(run_dir) / "ABORTED.txt").string(),
                     outcome.diagnostic + "\n");
          write_text((fs::path(run_dir) / "metrics.csv").string(), metrics_csv);
          write_text((fs::path(run_dir) / "gates.csv").string(), gates_csv);
          return outcome;
        }
        ag::backward(loss.total);
        for (size_t p = 0; p < params.size(); ++p) {
          Tensor g = bind.grad_of(*params[p]);
          Tensor& acc = grads[p];
          for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
        }
        stats.add(loss.report);
        for (GateTelemetry& gt : fwd.gates) epoch_gates.push_back(gt);
      }
      const double inv = 1.0 / batch_n;
      for (Tensor& g : grads) {
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= inv;
      }
      adam.step(grads);
    }

    // Validation slice metrics (eval mode: hard gates, no noise).
    double val_miou = -1.0;
    double val_mdice = -1.0;
    if (n_val > 0) {
      std::vector<SampleMetrics> per_sample;
      for (int vi = n_train; vi < n; ++vi) {
        EvalOutput out = model_forward_eval(data.samples[static_cast<size_t>(vi)],
                                            data.prompts[static_cast<size_t>(vi)], model);
        OverlapCounts c =
            binary_iou_dice(out.prob, data.samples[static_cast<size_t>(vi)].label, 0.5);
        per_sample.push_back(SampleMetrics{
            data.samples[static_cast<size_t>(vi)].sample_id, c.iou, c.dice});
      }
      EvalReport report = aggregate(std::move(per_sample), 0.5);
      val_miou = report.miou;
      val_mdice = report.mdice;
    }

    const double inv_count = stats.count ? 1.0 / static_cast<double>(stats.count) : 0.0;
    metrics_csv += std::to_string(epoch) + "," + g17(stats.total * inv_count) + "," +
                   g17(stats.dice * inv_count) + "," + g17(stats.focal * inv_count) + "," +
                   g17(stats.lesion_fraction * inv_count) + "," +
                   g17(stats.size_weight * inv_count) + "," +
                   (n_val > 0 ? g17(val_miou) : "") + "," +
                   (n_val > 0 ? g17(val_mdice) : "") + "\n";
    append_gate_rows(gates_csv, epoch,
                     gate_stats(epoch_gates, model.msfb_flops_per_call()));

    save_checkpoint(checkpoint_stem, model, config);
    outcome.epochs_completed = epoch;
    outcome.final_loss = stats.total * inv_count;
    outcome.final_val_miou = val_miou;
    outcome.final_val_mdice = val_mdice;
  }

  write_text((fs::path(run_dir) / "metrics.csv").string(), metrics_csv);
  write_text((fs::path(run_dir) / "gates.csv").string(), gates_csv);
  outcome.ok = true;
  return outcome;
}

EvalOutcome evaluate(const EvalOptions& options) {
  SGPSEG_CHECK(!options.checkpoint.empty(), "evaluate: checkpoint path is not set");
  SGPSEG_CHECK(!options.manifest.empty(), "evaluate: manifest path is not set");
  SGPSEG_CHECK(options.threshold > 0.0 && options.threshold < 1.0,
               "evaluate: threshold must lie in (0,1), got " << options.threshold);
  LoadedCheckpoint ckpt = load_checkpoint(options.checkpoint);
  DatasetManifest manifest = read_manifest(options.manifest);
  SGPSEG_CHECK(!manifest.entries.empty(), "evaluate: the test split is empty");

  std::vector<SampleMetrics> per_sample;
  std::vector<GateTelemetry> telemetry;
  std::vector<std::pair<std::string, std::string>> prompt_hashes;
  for (const ManifestEntry& entry : manifest.entries) {
    PromptSet prompts = load_prompts(manifest, entry);
    VolumeSample sample = load_sample(manifest, entry);
    sample = pad_to_multiple(sample, ckpt.model.config.patch_size);
    EvalOutput out = model_forward_eval(sample, prompts, ckpt.model);
    OverlapCounts c = binary_iou_dice(out.prob, sample.label, options.threshold);
    per_sample.push_back(SampleMetrics{entry.sample_id, c.iou, c.dice});
    for (GateTelemetry& gt : out.gates) telemetry.push_back(gt);
    prompt_hashes.emplace_back(
        entry.sample_id,
        hash_hex(fnv1a_file((fs::path(manifest.dir) / entry.prompt_path).string())));
  }

  EvalOutcome outcome;
  outcome.report = aggregate(std::move(per_sample), options.threshold);
  outcome.stats = gate_stats(telemetry, ckpt.model.msfb_flops_per_call());

  std::sort(prompt_hashes.begin(), prompt_hashes.end());
  std::string combined_input;
  for (const auto& [id, hex] : prompt_hashes) combined_input += id + ":" + hex + "\n";
  outcome.prompt_hash_combined = hash_hex(fnv1a_bytes(combined_input));

  if (!options.expect_prompt_hash.empty()) {
    SGPSEG_CHECK(outcome.prompt_hash_combined == options.expect_prompt_hash,
                 "evaluate: prompt files hash to " << outcome.prompt_hash_combined
                                                   << " but "
                                                   << options.expect_prompt_hash
                                                   << " was expected; compared runs must "
                                                      "use identical prompt sets");
  }

  if (!options.out_path.empty()) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["checkpoint"] = options.checkpoint;
    j["manifest"] = options.manifest;
    j["threshold"] = options.threshold;
    j["miou"] = outcome.report.miou;
    j["mdice"] = outcome.report.mdice;
    nlohmann::json rows = nlohmann::json::array();
    for (const SampleMetrics& s : outcome.report.per_sample) {
      rows.push_back({{"sample_id", s.sample_id}, {"iou", s.iou}, {"dice", s.dice}});
    }
    j["per_sample"] = rows;
    j["gate_stats"] = gate_stats_json(outcome.stats);
    nlohmann::json hashes;
    for (const auto& [id, hex] : prompt_hashes) hashes[id] = hex;
    j["prompt_hashes"] = hashes;
    j["prompt_hash_combined"] = outcome.prompt_hash_combined;
    write_text(options.out_path, j.dump(2) + "\n");

    // CSV rendition alongside the JSON report.
    std::string csv = "sample_id,iou,dice\n";
    for (const SampleMetrics& s : outcome.report.per_sample) {
      csv += s.sample_id + "," + g17(s.iou) + "," + g17(s.dice) + "\n";
    }
    fs::path csv_path = fs::path(options.out_path).replace_extension(".csv");
    write_text(csv_path.string(), csv);
  }
  return outcome;
}

namespace {

std::string position_letter(SgpmPosition p) {
  switch (p) {
    case SgpmPosition::end:
      return "a";
    case SgpmPosition::begin:
      return "b";
    case SgpmPosition::both:
      return "c";
  }
  return "?";
}

struct CellResult {
  double miou = 0.0;
  double mdice = 0.0;
  double open_rate = 0.0;
  std::string prompt_hash;
};

CellResult run_cell(const RunConfig& cfg, const std::string& test_manifest) {
  TrainOutcome t = train(cfg);
  SGPSEG_CHECK_NUM(t.ok, "ablation cell '" << cfg.name << "' aborted: " << t.diagnostic);
  EvalOptions eo;
  eo.checkpoint = (fs::path(t.run_dir) / "checkpoint").string();
  eo.manifest = test_manifest;
  eo.out_path = (fs::path(t.run_dir) / "eval.json").string();
  EvalOutcome e = evaluate(eo);
  CellResult r;
  r.miou = e.report.miou;
  r.mdice = e.report.mdice;
  r.open_rate = e.stats.overall_open_rate;
  r.prompt_hash = e.prompt_hash_combined;
  return r;
}

}  // namespace

AblationOutcome ablate(const AblationGrid& grid) {
  SGPSEG_CHECK(!grid.positions.empty(), "ablate: the position set is empty");
  SGPSEG_CHECK(!grid.ranges.empty(), "ablate: the layer-range set is empty");
  SGPSEG_CHECK(grid.repetitions >= 1, "ablate: repetitions must be >= 1");
  grid.base.validate();
  for (const SgpmLayerRange& r : grid.ranges) {
    SGPSEG_CHECK(!r.empty() && r.lo >= 1 && r.hi <= grid.base.encoder.num_blocks,
                 "ablate: range " << r.str() << " invalid for "
                                  << grid.base.encoder.num_blocks << " blocks");
  }
  const std::string test_manifest =
      (fs::path(grid.base.dataset_dir) / "test_manifest.json").string();
  SGPSEG_CHECK(fs::exists(test_manifest),
               "ablate: missing manifest '" << test_manifest << "'");

  AblationOutcome outcome;
  outcome.out_dir = grid.base.run_dir();
  fs::create_directories(outcome.out_dir);
  fs::create_directories(fs::path(outcome.out_dir) / "plots");

  std::string cells_csv = "position,layers,rep,miou,mdice,open_rate\n";
  for (SgpmPosition pos : grid.positions) {
    for (const SgpmLayerRange& range : grid.ranges) {
      AblationCell cell;
      cell.position = pos;
      cell.range = range;
      for (int rep = 0; rep < grid.repetitions; ++rep) {
        RunConfig cfg = grid.base;
        cfg.out_dir = (fs::path(outcome.out_dir) / "cells").string();
        cfg.name = position_letter(pos) + "_" + range.str() + "_r" + std::to_string(rep);
        cfg.encoder.sgpm_position = pos;
        cfg.encoder.sgpm_layers = range;
        cfg.seed = grid.base.seed + static_cast<uint64_t>(rep);
        CellResult r = run_cell(cfg, test_manifest);
        if (outcome.prompt_hash.empty()) {
          outcome.prompt_hash = r.prompt_hash;
        } else {
          SGPSEG_CHECK(outcome.prompt_hash == r.prompt_hash,
                       "ablate: prompt files differ between cells; fairness requires one "
                       "frozen prompt set");
        }
        cell.miou += r.miou;
        cell.mdice += r.mdice;
        cell.open_rate += r.open_rate;
        cells_csv += to_string(pos) + "," + range.str() + "," + std::to_string(rep) + "," +
                     g17(r.miou) + "," + g17(r.mdice) + "," + g17(r.open_rate) + "\n";
      }
      cell.miou /= grid.repetitions;
      cell.mdice /= grid.repetitions;
      cell.open_rate /= grid.repetitions;
      outcome.cells.push_back(cell);
    }
  }

  std::string table_csv = "position,layers,miou,mdice,open_rate\n";
  for (const AblationCell& c : outcome.cells) {
    table_csv += to_string(c.position) + "," + c.range.str() + "," + g17(c.miou) + "," +
                 g17(c.mdice) + "," + g17(c.open_rate) + "\n";
  }
  write_text((fs::path(outcome.out_dir) / "ablation.csv").string(), table_csv);
  write_text((fs::path(outcome.out_dir) / "ablation_cells.csv").string(), cells_csv);

  nlohmann::json panels = nlohmann::json::array();
  for (SgpmPosition pos : grid.positions) {
    nlohmann::json bars = nlohmann::json::array();
    for (const AblationCell& c : outcome.cells) {
      if (c.position != pos) continue;
      bars.push_back(
          {{"range", c.range.str()}, {"mdice", c.mdice}, {"miou", c.miou}});
    }
    panels.push_back({{"position", to_string(pos)},
                      {"label", "(" + position_letter(pos) + ") " + to_string(pos)},
                      {"bars", bars}});
  }
  nlohmann::json chart;
  chart["format_version"] = 1;
  chart["metric"] = "mdice";
  chart["panels"] = panels;
  write_text((fs::path(outcome.out_dir) / "ablation_chart.json").string(),
             chart.dump(2) + "\n");

  if (grid.with_summary) {
    struct Setting {
      std::string name;
      bool sgpm;
      bool zoom;
    };
    const Setting settings[] = {{"baseline", false, false},
                                {"+sgpm", true, false},
                                {"+sgpm+zoom", true, true}};
    std::string summary_csv = "setting,miou,mdice\n";
    for (const Setting& s : settings) {
      SummaryRow row;
      row.setting = s.name;
      for (int rep = 0; rep < grid.repetitions; ++rep) {
        RunConfig cfg = grid.base;
        cfg.out_dir = (fs::path(outcome.out_dir) / "summary").string();
        std::string tag = s.name;
        std::replace(tag.begin(), tag.end(), '+', 'p');
        cfg.name = tag + "_r" + std::to_string(rep);
        cfg.seed = grid.base.seed + static_cast<uint64_t>(rep);
        if (!s.sgpm) cfg.encoder.sgpm_layers = SgpmLayerRange{};
        if (!s.zoom) cfg.loss.combine_lambda = 0.0;  // plain Dice objective
        CellResult r = run_cell(cfg, test_manifest);
        SGPSEG_CHECK(outcome.prompt_hash.empty() || outcome.prompt_hash == r.prompt_hash,
                     "ablate: prompt files differ between summary rows");
        row.miou += r.miou;
        row.mdice += r.mdice;
      }
      row.miou /= grid.repetitions;
      row.mdice /= grid.repetitions;
      summary_csv += row.setting + "," + g17(row.miou) + "," + g17(row.mdice) + "\n";
      outcome.summary.push_back(row);
    }
    write_text((fs::path(outcome.out_dir) / "summary.csv").string(), summary_csv);
  }
  return outcome;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  SGPSEG_CHECK(in.good(), "cannot open '" << path << "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

void write_run_plots(const std::string& run_dir) {
  const std::string metrics_path = (fs::path(run_dir) / "metrics.csv").string();
  SGPSEG_CHECK(fs::exists(metrics_path), "no metrics.csv under '" << run_dir << "'");
  auto rows = read_csv(metrics_path);
  SGPSEG_CHECK(rows.size() >= 2, "metrics.csv has no data rows");
  LineSeries total{"total", {}, {}}, dice{"dice term", {}, {}}, focal{"focal term", {}, {}};
  LineSeries vmiou{"val mIoU", {}, {}}, vmdice{"val mDice", {}, {}};
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 8) continue;
    double epoch = std::stod(r[0]);
    total.x.push_back(epoch);
    total.y.push_back(std::stod(r[1]));
    dice.x.push_back(epoch);
    dice.y.push_back(std::stod(r[2]));
    focal.x.push_back(epoch);
    focal.y.push_back(std::stod(r[3]));
    if (!r[6].empty()) {
      vmiou.x.push_back(epoch);
      vmiou.y.push_back(std::stod(r[6]));
    }
    if (!r[7].empty()) {
      vmdice.x.push_back(epoch);
      vmdice.y.push_back(std::stod(r[7]));
    }
  }
  fs::create_directories(fs::path(run_dir) / "plots");
  write_line_svg((fs::path(run_dir) / "plots" / "loss_curve.svg").string(),
                 "Training loss", "epoch", "loss", {total, dice, focal});
  if (!vmdice.x.empty()) {
    write_line_svg((fs::path(run_dir) / "plots" / "dice_vs_epoch.svg").string(),
                   "Validation overlap", "epoch", "metric", {vmdice, vmiou});
  }
}

void write_ablation_plot(const std::string& ablation_dir) {
  const std::string chart_path = (fs::path(ablation_dir) / "ablation_chart.json").string();
  SGPSEG_CHECK(fs::exists(chart_path),
               "no ablation_chart.json under '" << ablation_dir << "'");
  std::ifstream in(chart_path);
  nlohmann::json j;
  in >> j;
  std::vector<BarPanel> panels;
  for (const auto& p : j.at("panels")) {
    BarPanel panel;
    panel.title = p.at("label").get<std::string>();
    for (const auto& b : p.at("bars")) {
      panel.bars.emplace_back(b.at("range").get<std::string>(),
                              b.at("mdice").get<double>());
    }
    panels.push_back(std::move(panel));
  }
  fs::create_directories(fs::path(ablation_dir) / "plots");
  write_bar_panels_svg((fs::path(ablation_dir) / "plots" / "ablation_bars.svg").string(),
                       "mDice by insertion depth and position", panels);
}

}  // namespace sgpseg
