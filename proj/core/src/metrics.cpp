// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/metrics.hpp"

#include <algorithm>
#include <map>

namespace sgpseg {

OverlapCounts binary_iou_dice(const Tensor& pred, const Tensor& truth, double threshold) {
  SGPSEG_CHECK(pred.same_shape(truth), "metrics: shape mismatch " << pred.shape_str()
                                                                  << " vs "
                                                                  << truth.shape_str());
  OverlapCounts c;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    bool p = pred[i] > threshold;
    bool y = truth[i] != 0.0;
    c.intersection += (p && y) ? 1 : 0;
    c.union_ += (p || y) ? 1 : 0;
    c.pred_count += p ? 1 : 0;
    c.truth_count += y ? 1 : 0;
  }
  if (c.union_ == 0) {
    c.iou = 1.0;
    c.dice = 1.0;
  } else {
    c.iou = static_cast<double>(c.intersection) / static_cast<double>(c.union_);
    c.dice = 2.0 * static_cast<double>(c.intersection) /
             static_cast<double>(c.pred_count + c.truth_count);
  }
  return c;
}

EvalReport aggregate(std::vector<SampleMetrics> per_sample, double threshold) {
  SGPSEG_CHECK(!per_sample.empty(), "metrics: cannot aggregate an empty test set");
  std::sort(per_sample.begin(), per_sample.end(),
            [](const SampleMetrics& a, const SampleMetrics& b) {
              return a.sample_id < b.sample_id;
            });
  EvalReport r;
  r.threshold = threshold;
  double iou_sum = 0.0;
  double dice_sum = 0.0;
  for (const SampleMetrics& s : per_sample) {
    iou_sum += s.iou;
    dice_sum += s.dice;
  }
  r.miou = iou_sum / static_cast<double>(per_sample.size());
  r.mdice = dice_sum / static_cast<double>(per_sample.size());
  r.per_sample = std::move(per_sample);
  return r;
}

GateStats gate_stats(const std::vector<GateTelemetry>& telemetry, int64_t flops_per_call) {
  SGPSEG_CHECK(flops_per_call >= 0, "gate_stats: negative flops_per_call");
  GateStats stats;
  // Key: (block, position-order) with begin before end within a block.
  auto pos_rank = [](SgpmPosition p) { return p == SgpmPosition::begin ? 0 : 1; };
  std::map<std::pair<int, int>, GateLayerStats> layers;
  for (const GateTelemetry& t : telemetry) {
    auto key = std::make_pair(t.block, pos_rank(t.position));
    GateLayerStats& ls = layers[key];
    ls.block = t.block;
    ls.position = t.position;
    ls.calls += 1;
    ls.open_calls += t.decision.hard_gate ? 1 : 0;
    ls.mean_soft_gate += t.decision.soft_gate;
    ls.mean_logit += t.decision.logit;
  }
  int64_t total_calls = 0;
  int64_t total_open = 0;
  for (auto& [key, ls] : layers) {
    ls.open_rate = ls.calls ? static_cast<double>(ls.open_calls) / ls.calls : 0.0;
    ls.mean_soft_gate = ls.calls ? ls.mean_soft_gate / ls.calls : 0.0;
    ls.mean_logit = ls.calls ? ls.mean_logit / ls.calls : 0.0;
    total_calls += ls.calls;
    total_open += ls.open_calls;
    stats.per_layer.push_back(ls);
  }
  stats.overall_open_rate =
      total_calls ? static_cast<double>(total_open) / total_calls : 0.0;
  stats.msfb_flops_executed = total_open * flops_per_call;
  stats.msfb_flops_potential = total_calls * flops_per_call;
  return stats;
}

}  // namespace sgpseg
