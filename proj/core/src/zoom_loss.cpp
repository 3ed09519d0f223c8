// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/zoom_loss.hpp"

#include <cmath>

namespace sgpseg {

void LossConfig::validate() const {
  SGPSEG_CHECK(focal_alpha > 0.0 && focal_alpha < 1.0,
               "loss: focal_alpha must lie in (0,1), got " << focal_alpha);
  SGPSEG_CHECK(focal_gamma >= 0.0, "loss: focal_gamma must be >= 0, got " << focal_gamma);
  SGPSEG_CHECK(dice_smooth > 0.0, "loss: dice_smooth must be > 0, got " << dice_smooth);
  SGPSEG_CHECK(combine_lambda >= 0.0,
               "loss: combine_lambda must be >= 0, got " << combine_lambda);
  SGPSEG_CHECK(size_exponent >= 0.0,
               "loss: size_exponent must be >= 0, got " << size_exponent);
  SGPSEG_CHECK(size_ref_fraction > 0.0,
               "loss: size_ref_fraction must be > 0, got " << size_ref_fraction);
  SGPSEG_CHECK(size_floor > 0.0, "loss: size_floor must be > 0, got " << size_floor);
}

namespace {

void check_pair(const Tensor& prob, const Tensor& truth) {
  SGPSEG_CHECK(prob.same_shape(truth), "loss: shape mismatch " << prob.shape_str()
                                                               << " vs "
                                                               << truth.shape_str());
  for (int64_t i = 0; i < prob.numel(); ++i) {
    SGPSEG_CHECK(prob[i] >= 0.0 && prob[i] <= 1.0,
                 "loss: probability outside [0,1] at flat index " << i << ": " << prob[i]);
    SGPSEG_CHECK(truth[i] == 0.0 || truth[i] == 1.0,
                 "loss: label must be binary, found " << truth[i] << " at flat index "
                                                      << i);
  }
}

}  // namespace

double focal_term(const Tensor& prob, const Tensor& truth, double alpha, double gamma) {
  check_pair(prob, truth);
  double acc = 0.0;
  for (int64_t i = 0; i < prob.numel(); ++i) {
    double p = std::min(kProbClampHi, std::max(kProbClampLo, prob[i]));
    double y = truth[i];
    acc += alpha * y * std::pow(1.0 - p, gamma) * std::log(p) +
           (1.0 - alpha) * (1.0 - y) * std::pow(p, gamma) * std::log(1.0 - p);
  }
  return -acc / static_cast<double>(prob.numel());
}

double dice_term(const Tensor& prob, const Tensor& truth, double smooth) {
  SGPSEG_CHECK(prob.same_shape(truth), "loss: shape mismatch " << prob.shape_str()
                                                               << " vs "
                                                               << truth.shape_str());
  double inter = 0.0;
  double psum = 0.0;
  double ysum = 0.0;
  for (int64_t i = 0; i < prob.numel(); ++i) {
    inter += prob[i] * truth[i];
    psum += prob[i];
    ysum += truth[i];
  }
  return 1.0 - (2.0 * inter + smooth) / (psum + ysum + smooth);
}

double size_weight_for_fraction(double lesion_fraction, const LossConfig& config) {
  if (config.size_weighting == SizeWeighting::off) return 1.0;
  double num = config.size_ref_fraction + config.size_floor;
  double den = lesion_fraction + config.size_floor;
  return std::pow(num / den, config.size_exponent);
}

LossReport zoom_loss(const Tensor& prob, const Tensor& truth, const LossConfig& config) {
  config.validate();
  check_pair(prob, truth);
  LossReport r;
  r.lesion_fraction = tensor_sum(truth) / static_cast<double>(truth.numel());
  r.size_weight = size_weight_for_fraction(r.lesion_fraction, config);
  r.dice_term = dice_term(prob, truth, config.dice_smooth);
  r.focal_term = focal_term(prob, truth, config.focal_alpha, config.focal_gamma);
  r.total = r.dice_term + config.combine_lambda * r.size_weight * r.focal_term;
  return r;
}

LossGraph zoom_loss_graph(const ag::Var& prob, const Tensor& truth,
                          const LossConfig& config) {
  config.validate();
  check_pair(prob->value, truth);
  const int64_t n = truth.numel();

  Tensor truth_neg(truth.shape());  // 1 - y
  for (int64_t i = 0; i < n; ++i) truth_neg[i] = 1.0 - truth[i];

  ag::Var pc = ag::clamp(prob, kProbClampLo, kProbClampHi);
  ag::Var one_minus_pc = ag::affine(pc, -1.0, 1.0);

  // alpha * y * (1-p)^gamma * log(p)
  ag::Var pos = ag::mul_const(
      ag::mul(ag::pow_const(one_minus_pc, config.focal_gamma), ag::log_op(pc)), truth);
  // (1-alpha) * (1-y) * p^gamma * log(1-p)
  ag::Var neg = ag::mul_const(
      ag::mul(ag::pow_const(pc, config.focal_gamma), ag::log_op(one_minus_pc)), truth_neg);
  ag::Var focal = ag::scale(
      ag::mean(ag::add(ag::scale(pos, config.focal_alpha),
                       ag::scale(neg, 1.0 - config.focal_alpha))),
      -1.0);

  // Soft Dice on the unclamped probabilities.
  ag::Var inter = ag::sum(ag::mul_const(prob, truth));
  ag::Var psum = ag::sum(prob);
  const double ysum = tensor_sum(truth);
  ag::Var num = ag::affine(inter, 2.0, config.dice_smooth);
  ag::Var den = ag::affine(psum, 1.0, ysum + config.dice_smooth);
  ag::Var dice = ag::affine(ag::vdiv(num, den), -1.0, 1.0);

  LossGraph g;
  g.report.lesion_fraction = ysum / static_cast<double>(n);
  g.report.size_weight = size_weight_for_fraction(g.report.lesion_fraction, config);
  g.total = ag::add(dice,
                    ag::scale(focal, config.combine_lambda * g.report.size_weight));
  g.report.dice_term = dice->value[0];
  g.report.focal_term = focal->value[0];
  g.report.total = g.total->value[0];
  return g;
}

}  // namespace sgpseg
