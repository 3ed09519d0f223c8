// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-Gated Prompting Module: a multi-channel self-gating unit that decides,
// per feature map, whether multi-scale enhancement is worth running, plus the
// conditional application of the fusion block.
//
// Gating pipeline for a feature map F of shape (H,W,D,C):
//   f_X  = mean of F over the three axes other than X     (axis summaries)
//   k_X  = phi_X(f_X)                                     (two-layer MLP, scalar key)
//   alpha = softmax(a), s = sum_X alpha_X * k_X           (gate logit)
//   g~   = sigmoid((s + log(eps) - log(1-eps)) / T)       (gumbel-sigmoid)
//   g    = [g~ > 0.5]                                     (hard gate)
// Training blends g~*MSFB(F) + (1-g~)*F (or straight-through on g);
// inference uses the hard gate and skips the fusion block entirely when
// closed, so a closed gate is an exact identity.

#pragma once

#include <array>
#include <string>
#include <utility>

#include "sgpseg/autograd.hpp"
#include "sgpseg/msfb.hpp"
#include "sgpseg/rng.hpp"

namespace sgpseg {

// A feature map is any finite 4D (h,w,d,c) tensor.
using FeatureMap4D = Tensor;

// Throws ValidationError naming the first offending index if the tensor is
// not a valid feature map.
void validate_feature_map(const Tensor& f);

struct AxisSummaries {
  Tensor h;  // length H
  Tensor w;  // length W
  Tensor d;  // length D
  Tensor c;  // length C
};

// Mean pooling along complementary axes; rejects non-finite input.
AxisSummaries axis_summaries(const FeatureMap4D& f);

// Two-layer scalar predictor: input_len -> hidden -> 1, tanh in between.
struct AxisPredictor {
  Tensor w1;  // (input_len, hidden)
  Tensor b1;  // (hidden)
  Tensor w2;  // (hidden, 1)
  Tensor b2;  // (1)
  int input_len = 0;
  int hidden = 0;

  // hidden = max(8, input_len / 4); weights small-uniform, output bias
  // out_bias (used to open the gate slightly at initialization).
  static AxisPredictor init(int input_len, double out_bias, Rng& rng);

  double eval(const Tensor& summary) const;
  ag::Var eval(Binder& bind, const ag::Var& summary) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct GateParams {
  AxisPredictor phi_h, phi_w, phi_d, phi_c;
  Tensor mix_logits;         // a, shape (4); softmax-normalized mixing weights
  double temperature = 1.0;  // T > 0

  // extents = (H, W, D, C) of the feature maps this gate was built for.
  static GateParams init(const std::array<int, 4>& extents, Rng& rng);

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct GateDecision {
  std::array<double, 4> keys{};     // (k_H, k_W, k_D, k_C)
  std::array<double, 4> weights{};  // alpha, sums to 1
  double logit = 0.0;               // s
  double soft_gate = 0.5;           // g~ in (0,1)
  int hard_gate = 0;                // [g~ > 0.5]
  double noise = 0.5;               // the sampled eps, recorded for replay
};

enum class GateMode { train, eval };
enum class GateEstimator { soft, straight_through };

// Keys, mixing weights and logit for the given summaries; gate fields left
// at their defaults.
GateDecision gate_logit(const AxisSummaries& summaries, const GateParams& params);

// (soft_gate, hard_gate). Train mode requires noise strictly inside (0,1);
// eval mode suppresses noise (eps pinned to 0.5 so the logistic term is 0).
std::pair<double, int> gumbel_sigmoid(double logit, double temperature, double noise,
                                      GateMode mode);

// Blends base and enhanced according to the decision. Eval returns one of the
// two inputs unchanged; train+soft blends with g~; train+straight_through
// selects with the hard gate (gradients, where used, flow through the soft
// gate — see the graph path).
Tensor apply_gate(const Tensor& base, const Tensor& enhanced, const GateDecision& decision,
                  GateMode mode, GateEstimator estimator);

// Gate + fusion block of one insertion point.
struct SgpmParams {
  GateParams gate;
  MsfbParams msfb;

  static SgpmParams init(const std::array<int, 4>& extents, int compressed, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct SgpmOutput {
  ag::Var features;
  GateDecision decision;
};

// Full module on the graph. In train mode `noise_eps` must come from the run's
// seeded stream; in eval mode it is ignored, the decision is computed without
// a graph and the fusion block only runs when the hard gate is open.
SgpmOutput sgpm_forward(Binder& bind, const ag::Var& features, SgpmParams& params,
                        GateMode mode, GateEstimator estimator, double noise_eps);

}  // namespace sgpseg
