// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Lesion-focused objective: soft Dice plus a voxel-balanced focal term,
//
//   L_V = -(1/N) sum_i [ alpha*y_i*(1-p_i)^gamma*log(p_i)
//                        + (1-alpha)*(1-y_i)*p_i^gamma*log(1-p_i) ]
//
// optionally up-weighted for small lesions:
//
//   total = dice + combine_lambda * size_weight * focal
//   size_weight = ((ref + floor) / (lesion_fraction + floor))^exponent
//
// Probabilities are clamped to [1e-7, 1-1e-7] before the logs. All
// reductions run sequentially in flat index ascending order.

#pragma once

#include "sgpseg/autograd.hpp"

namespace sgpseg {

enum class SizeWeighting { off, inverse_fraction };

struct LossConfig {
  double focal_alpha = 0.75;   // in (0,1)
  double focal_gamma = 2.0;    // >= 0
  double dice_smooth = 1e-5;   // > 0
  double combine_lambda = 1.0; // >= 0
  SizeWeighting size_weighting = SizeWeighting::inverse_fraction;
  double size_exponent = 0.5;
  double size_ref_fraction = 0.05;
  double size_floor = 1e-6;

  void validate() const;
};

struct LossReport {
  double total = 0.0;
  double dice_term = 0.0;
  double focal_term = 0.0;
  double lesion_fraction = 0.0;
  double size_weight = 1.0;
};

// Probability clamp bounds used ahead of the focal logs.
inline constexpr double kProbClampLo = 1e-7;
inline constexpr double kProbClampHi = 1.0 - 1e-7;

// Voxel-balanced focal term; prob must lie in [0,1] before clamping and
// truth must be binary. Shapes must match.
double focal_term(const Tensor& prob, const Tensor& truth, double alpha, double gamma);

// Soft Dice loss 1 - (2*sum(p*y)+s)/(sum(p)+sum(y)+s), in [0,1].
double dice_term(const Tensor& prob, const Tensor& truth, double smooth);

// size_weight for a given foreground fraction under the config.
double size_weight_for_fraction(double lesion_fraction, const LossConfig& config);

// Combined loss on plain tensors.
LossReport zoom_loss(const Tensor& prob, const Tensor& truth, const LossConfig& config);

// Combined loss on the graph; `total` is differentiable w.r.t. prob.
struct LossGraph {
  ag::Var total;
  LossReport report;
};
LossGraph zoom_loss_graph(const ag::Var& prob, const Tensor& truth, const LossConfig& config);

}  // namespace sgpseg
