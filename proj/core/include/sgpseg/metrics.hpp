// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Overlap metrics, their aggregation, and gate/FLOP accounting for the
// conditionally executed fusion blocks.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgpseg/backbone.hpp"
#include "sgpseg/tensor.hpp"

namespace sgpseg {

struct OverlapCounts {
  int64_t intersection = 0;
  int64_t union_ = 0;
  int64_t pred_count = 0;
  int64_t truth_count = 0;
  double iou = 1.0;
  double dice = 1.0;
};

// Thresholds pred, counts overlaps, and applies the both-empty convention
// iou = dice = 1.
OverlapCounts binary_iou_dice(const Tensor& pred, const Tensor& truth, double threshold);

struct SampleMetrics {
  std::string sample_id;
  double iou = 0.0;
  double dice = 0.0;
};

struct EvalReport {
  std::vector<SampleMetrics> per_sample;  // sorted by sample_id
  double miou = 0.0;
  double mdice = 0.0;
  double threshold = 0.5;
};

// Per-sample means; rejects an empty test set. Rows are sorted by sample_id
// so aggregation order never depends on evaluation order.
EvalReport aggregate(std::vector<SampleMetrics> per_sample, double threshold);

struct GateLayerStats {
  int block = 0;
  SgpmPosition position = SgpmPosition::begin;
  int64_t calls = 0;
  int64_t open_calls = 0;
  double open_rate = 0.0;
  double mean_soft_gate = 0.0;
  double mean_logit = 0.0;
};

struct GateStats {
  std::vector<GateLayerStats> per_layer;  // ordered bottom-up, begin before end
  double overall_open_rate = 0.0;
  int64_t msfb_flops_executed = 0;
  int64_t msfb_flops_potential = 0;
};

// Aggregates telemetry; flops_per_call is the analytic cost of one fusion
// block invocation at the model's feature extents.
GateStats gate_stats(const std::vector<GateTelemetry>& telemetry, int64_t flops_per_call);

}  // namespace sgpseg
