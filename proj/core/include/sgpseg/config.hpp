// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one flat TOML-style key/value file (with [sections]),
// every key overridable from the CLI. The resolved config is echoed into
// each run directory and embedded into checkpoints.

#pragma once

#include <cstdint>
#include <string>

#include "sgpseg/backbone.hpp"
#include "sgpseg/zoom_loss.hpp"

namespace sgpseg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RunConfig {
  std::string name = "run";
  uint64_t seed = 0;
  double lr = 8e-4;
  int epochs = 40;
  int batch_size = 2;
  std::string dataset_dir;
  std::string out_dir = "runs";
  double val_fraction = 0.1;

  EncoderConfig encoder;
  LossConfig loss;
  AdamConfig optimizer;

  GateEstimator estimator = GateEstimator::soft;
  double gate_temperature = 1.0;
  double gate_temperature_final = 1.0;  // linear anneal target; == start disables

  void validate() const;
  std::string run_dir() const;
};

// Applies one dotted key ("lr", "encoder.sgpm_layers", ...). Unknown keys and
// unparseable values raise ValidationError.
void apply_config_kv(RunConfig& config, const std::string& key, const std::string& value);

// Parses a TOML-subset file: comments (#), [section] headers, key = value
// with quoted strings, numbers and booleans.
RunConfig parse_run_config_file(const std::string& path);

// Canonical echo of the resolved config; parseable by parse_run_config_file.
std::string run_config_toml(const RunConfig& config);

// JSON round-trip used to embed the config into checkpoints.
std::string run_config_json_text(const RunConfig& config);
RunConfig run_config_from_json_text(const std::string& text);

std::string to_string(GateEstimator e);
GateEstimator parse_estimator(const std::string& s);
std::string to_string(SizeWeighting w);
SizeWeighting parse_size_weighting(const std::string& s);

}  // namespace sgpseg
