// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint format: <stem>.bin holds every parameter tensor concatenated as
// little-endian float32; <stem>.json is the index
//   {"format_version":1, "volume_shape":[...],
//    "tensors":[{"name","shape","offset","byte_length"}...],
//    "config":{...resolved run config...}}
// The embedded config makes a checkpoint self-describing: loading rebuilds
// the model from it and overwrites the parameters by name.

#pragma once

#include <string>

#include "sgpseg/backbone.hpp"
#include "sgpseg/config.hpp"

namespace sgpseg {

// Writes <stem>.bin and <stem>.json.
void save_checkpoint(const std::string& stem, ModelParams& model, const RunConfig& config);

struct LoadedCheckpoint {
  ModelParams model;
  RunConfig config;
};

// `path` may be the .json index or the stem.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace sgpseg
