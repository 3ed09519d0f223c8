// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/sgpm.hpp"

#include <algorithm>
#include <cmath>

#include "sgpseg/nn.hpp"

namespace sgpseg {

void validate_feature_map(const Tensor& f) {
  SGPSEG_CHECK(f.ndim() == 4, "feature map must be 4D (h,w,d,c), got " << f.shape_str());
  int64_t bad = f.first_nonfinite();
  if (bad >= 0) {
    auto coords = f.unflatten(bad);
    SGPSEG_CHECK(false, "feature map has non-finite value at (h,w,d,c)=("
                            << coords[0] << "," << coords[1] << "," << coords[2] << ","
                            << coords[3] << ")");
  }
}

AxisSummaries axis_summaries(const FeatureMap4D& f) {
  validate_feature_map(f);
  Binder bind(/*with_grad=*/false);
  ag::Var fv = ag::constant(f);
  AxisSummaries s;
  s.h = ag::axis_mean(fv, 0)->value;
  s.w = ag::axis_mean(fv, 1)->value;
  s.d = ag::axis_mean(fv, 2)->value;
  s.c = ag::axis_mean(fv, 3)->value;
  return s;
}

AxisPredictor AxisPredictor::init(int input_len, double out_bias, Rng& rng) {
  SGPSEG_CHECK(input_len >= 1, "axis predictor input length must be >= 1");
  AxisPredictor p;
  p.input_len = input_len;
  p.hidden = std::max(8, input_len / 4);
  p.w1 = Tensor({input_len, p.hidden});
  p.b1 = Tensor({p.hidden});
  p.w2 = Tensor({p.hidden, 1});
  p.b2 = Tensor::full({1}, out_bias);
  init_uniform_fanin(p.w1, input_len, rng);
  init_uniform_fanin(p.w2, p.hidden, rng);
  return p;
}

double AxisPredictor::eval(const Tensor& summary) const {
  Binder bind(/*with_grad=*/false);
  return eval(bind, ag::constant(summary))->value[0];
}

ag::Var AxisPredictor::eval(Binder& bind, const ag::Var& summary) const {
  SGPSEG_CHECK(summary->value.ndim() == 1 && summary->value.extent(0) == input_len,
               "axis predictor built for length " << input_len << " got summary of shape "
                                                  << summary->value.shape_str());
  auto& self = const_cast<AxisPredictor&>(*this);
  ag::Var row = ag::reshape(summary, {1, input_len});
  ag::Var h = ag::tanh_op(ag::linear(row, bind.bind(self.w1), bind.bind(self.b1)));
  ag::Var out = ag::linear(h, bind.bind(self.w2), bind.bind(self.b2));
  return ag::reshape(out, {1});
}

void AxisPredictor::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w1", w1);
  fn(prefix + ".b1", b1);
  fn(prefix + ".w2", w2);
  fn(prefix + ".b2", b2);
}

GateParams GateParams::init(const std::array<int, 4>& extents, Rng& rng) {
  GateParams p;
  // Output bias 0.5 on every predictor and uniform mixing make the initial
  // logit sit near +0.5: a mildly open gate that lets the fusion block
  // receive gradient from the first step.
  p.phi_h = AxisPredictor::init(extents[0], 0.5, rng);
  p.phi_w = AxisPredictor::init(extents[1], 0.5, rng);
  p.phi_d = AxisPredictor::init(extents[2], 0.5, rng);
  p.phi_c = AxisPredictor::init(extents[3], 0.5, rng);
  p.mix_logits = Tensor({4});
  p.temperature = 1.0;
  return p;
}

void GateParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  phi_h.visit(prefix + ".phi_h", fn);
  phi_w.visit(prefix + ".phi_w", fn);
  phi_d.visit(prefix + ".phi_d", fn);
  phi_c.visit(prefix + ".phi_c", fn);
  fn(prefix + ".mix_logits", mix_logits);
}

GateDecision gate_logit(const AxisSummaries& summaries, const GateParams& params) {
  GateDecision d;
  d.keys[0] = params.phi_h.eval(summaries.h);
  d.keys[1] = params.phi_w.eval(summaries.w);
  d.keys[2] = params.phi_d.eval(summaries.d);
  d.keys[3] = params.phi_c.eval(summaries.c);
  Binder bind(/*with_grad=*/false);
  Tensor alpha = ag::softmax(ag::constant(params.mix_logits))->value;
  d.logit = 0.0;
  for (int i = 0; i < 4; ++i) {
    d.weights[static_cast<size_t>(i)] = alpha[i];
    d.logit += alpha[i] * d.keys[static_cast<size_t>(i)];
  }
  return d;
}

std::pair<double, int> gumbel_sigmoid(double logit, double temperature, double noise,
                                      GateMode mode) {
  SGPSEG_CHECK(temperature > 0.0, "gumbel_sigmoid: temperature must be > 0, got "
                                      << temperature);
  double eps = mode == GateMode::eval ? 0.5 : noise;
  SGPSEG_CHECK(eps > 0.0 && eps < 1.0,
               "gumbel_sigmoid: noise must lie strictly inside (0,1), got " << eps);
  double z = (logit + std::log(eps) - std::log(1.0 - eps)) / temperature;
  double soft;
  if (z >= 0.0) {
    soft = 1.0 / (1.0 + std::exp(-z));
  } else {
    double e = std::exp(z);
    soft = e / (1.0 + e);
  }
  return {soft, soft > 0.5 ? 1 : 0};
}

Tensor apply_gate(const Tensor& base, const Tensor& enhanced, const GateDecision& decision,
                  GateMode mode, GateEstimator estimator) {
  SGPSEG_CHECK(base.same_shape(enhanced), "apply_gate: shape mismatch "
                                              << base.shape_str() << " vs "
                                              << enhanced.shape_str());
  if (mode == GateMode::eval || estimator == GateEstimator::straight_through) {
    return decision.hard_gate ? enhanced : base;
  }
  Tensor out(base.shape());
  const double g = decision.soft_gate;
  for (int64_t i = 0; i < out.numel(); ++i) {
    out[i] = g * enhanced[i] + (1.0 - g) * base[i];
  }
  return out;
}

SgpmParams SgpmParams::init(const std::array<int, 4>& extents, int compressed, Rng& rng) {
  SgpmParams p;
  Rng gate_rng = rng.substream(1);
  Rng msfb_rng = rng.substream(2);
  p.gate = GateParams::init(extents, gate_rng);
  p.msfb = MsfbParams::init(extents[3], compressed, msfb_rng);
  return p;
}

void SgpmParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  gate.visit(prefix + ".gate", fn);
  msfb.visit(prefix + ".msfb", fn);
}

SgpmOutput sgpm_forward(Binder& bind, const ag::Var& features, SgpmParams& params,
                        GateMode mode, GateEstimator estimator, double noise_eps) {
  validate_feature_map(features->value);
  SgpmOutput out;

  if (mode == GateMode::eval) {
    // No graph needed for the decision; the fusion block runs only when the
    // gate opens, so a closed gate is an exact pass-through.
    AxisSummaries summaries = axis_summaries(features->value);
    out.decision = gate_logit(summaries, params.gate);
    auto [soft, hard] =
        gumbel_sigmoid(out.decision.logit, params.gate.temperature, 0.5, GateMode::eval);
    out.decision.soft_gate = soft;
    out.decision.hard_gate = hard;
    out.decision.noise = 0.5;
    out.features = hard ? msfb_forward(bind, features, params.msfb) : features;
    return out;
  }

  // Training path: the whole decision lives on the graph.
  ag::Var f_h = ag::axis_mean(features, 0);
  ag::Var f_w = ag::axis_mean(features, 1);
  ag::Var f_d = ag::axis_mean(features, 2);
  ag::Var f_c = ag::axis_mean(features, 3);
  ag::Var keys = ag::concat_cols({
      ag::reshape(params.gate.phi_h.eval(bind, f_h), {1, 1}),
      ag::reshape(params.gate.phi_w.eval(bind, f_w), {1, 1}),
      ag::reshape(params.gate.phi_d.eval(bind, f_d), {1, 1}),
      ag::reshape(params.gate.phi_c.eval(bind, f_c), {1, 1}),
  });
  ag::Var alpha = ag::softmax(bind.bind(params.gate.mix_logits));
  ag::Var logit = ag::dot(ag::reshape(keys, {4}), alpha);

  const double temperature = params.gate.temperature;
  SGPSEG_CHECK(temperature > 0.0, "sgpm: temperature must be > 0, got " << temperature);
  SGPSEG_CHECK(noise_eps > 0.0 && noise_eps < 1.0,
               "sgpm: train-mode noise must lie strictly inside (0,1), got " << noise_eps);
  const double logistic_shift = std::log(noise_eps) - std::log(1.0 - noise_eps);
  ag::Var soft_gate =
      ag::sigmoid(ag::affine(logit, 1.0 / temperature, logistic_shift / temperature));

  ag::Var enhanced = msfb_forward(bind, features, params.msfb);
  out.features = estimator == GateEstimator::soft
                     ? ag::blend(features, enhanced, soft_gate)
                     : ag::blend_straight_through(features, enhanced, soft_gate);

  out.decision.logit = logit->value[0];
  for (int i = 0; i < 4; ++i) {
    out.decision.keys[static_cast<size_t>(i)] = keys->value[i];
    out.decision.weights[static_cast<size_t>(i)] = alpha->value[i];
  }
  out.decision.soft_gate = soft_gate->value[0];
  out.decision.hard_gate = soft_gate->value[0] > 0.5 ? 1 : 0;
  out.decision.noise = noise_eps;
  return out;
}

}  // namespace sgpseg
