// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/gradcheck.hpp"

#include <chrono>
#include <cmath>

#include "sgpseg/backbone.hpp"
#include "sgpseg/msfb.hpp"
#include "sgpseg/rng.hpp"
#include "sgpseg/sgpm.hpp"
#include "sgpseg/zoom_loss.hpp"

namespace sgpseg {

double fd_relative_error(double analytic, double numeric) {
  double denom = std::max(std::fabs(analytic) + std::fabs(numeric), 1e-5);
  return std::fabs(analytic - numeric) / denom;
}

void GradCheckAccumulator::add(const std::string& name, int64_t index, double analytic,
                               double numeric) {
  double rel = fd_relative_error(analytic, numeric);
  ++checks;
  if (rel > max_rel_err) {
    max_rel_err = rel;
    worst = name + "[" + std::to_string(index) + "]";
  }
}

double central_difference(Tensor& t, int64_t index, const std::function<double()>& eval) {
  const double saved = t[index];
  t[index] = saved + kFdStep;
  double plus = eval();
  t[index] = saved - kFdStep;
  double minus = eval();
  t[index] = saved;
  return (plus - minus) / (2.0 * kFdStep);
}

namespace {

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

// Checks every coordinate when `samples_per_tensor` <= 0, otherwise a seeded
// subset per tensor.
void check_tensors(const std::vector<NamedTensor>& tensors,
                   const std::function<double()>& eval,
                   const std::function<Tensor(const Tensor&)>& analytic_of,
                   int samples_per_tensor, Rng& rng, GradCheckAccumulator& acc) {
  for (const NamedTensor& nt : tensors) {
    Tensor analytic = analytic_of(*nt.tensor);
    std::vector<int64_t> indices;
    if (samples_per_tensor <= 0 || nt.tensor->numel() <= samples_per_tensor) {
      for (int64_t i = 0; i < nt.tensor->numel(); ++i) indices.push_back(i);
    } else {
      for (int s = 0; s < samples_per_tensor; ++s) {
        indices.push_back(rng.uniform_int(0, nt.tensor->numel() - 1));
      }
    }
    for (int64_t i : indices) {
      double numeric = central_difference(*nt.tensor, i, eval);
      acc.add(nt.name, i, analytic[i], numeric);
    }
  }
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform_in(lo, hi);
  return t;
}

// Scalar objective: weighted sum with fixed random weights, so every output
// coordinate influences the gradient.
double weighted_sum_value(const Tensor& out, const Tensor& weights) {
  double s = 0.0;
  for (int64_t i = 0; i < out.numel(); ++i) s += out[i] * weights[i];
  return s;
}

GradCheckReport check_sgpm(uint64_t seed) {
  GradCheckReport report;
  report.component = "sgpm";
  report.seed = seed;
  Rng rng(derive_seed(seed, 0x53u));
  const std::array<int, 4> shapes[] = {{2, 2, 2, 3}, {3, 3, 3, 4}, {2, 3, 2, 4}};
  const std::array<int, 4> extents = shapes[seed % 3];

  Rng init_rng = rng.substream(1);
  SgpmParams params = SgpmParams::init(extents, 2, init_rng);
  // Randomize mixing logits and temperature so softmax and scaling paths
  // are exercised away from their symmetric defaults.
  for (int i = 0; i < 4; ++i) params.gate.mix_logits[i] = rng.uniform_in(-0.5, 0.5);
  params.gate.temperature = rng.uniform_in(0.7, 1.3);
  Tensor features = random_tensor({extents[0], extents[1], extents[2], extents[3]}, rng,
                                  -1.0, 1.0);
  Tensor weights = random_tensor(features.shape(), rng, -1.0, 1.0);
  const double noise = rng.uniform_in(0.2, 0.8);

  auto eval = [&]() {
    Binder bind(false);
    SgpmOutput out = sgpm_forward(bind, ag::constant(features), params, GateMode::train,
                                  GateEstimator::soft, noise);
    return weighted_sum_value(out.features->value, weights);
  };

  Binder bind(true);
  ag::Var fvar = ag::leaf(features, true);
  SgpmOutput out =
      sgpm_forward(bind, fvar, params, GateMode::train, GateEstimator::soft, noise);
  ag::Var objective = ag::sum(ag::mul_const(out.features, weights));
  ag::backward(objective);

  std::vector<NamedTensor> tensors{{"features", &features}};
  params.visit("sgpm", [&](const std::string& name, Tensor& t) {
    tensors.push_back(NamedTensor{name, &t});
  });
  GradCheckAccumulator acc;
  Rng pick = rng.substream(2);
  check_tensors(
      tensors, eval,
      [&](const Tensor& t) {
        return &t == &features ? (fvar->grad.empty() ? Tensor::zeros(t.shape()) : fvar->grad)
                               : bind.grad_of(t);
      },
      /*samples_per_tensor=*/0, pick, acc);
  report.passed = acc.passed();
  report.max_rel_err = acc.max_rel_err;
  report.checks = acc.checks;
  report.worst = acc.worst;
  return report;
}

GradCheckReport check_msfb(uint64_t seed) {
  GradCheckReport report;
  report.component = "msfb";
  report.seed = seed;
  Rng rng(derive_seed(seed, 0x4du));

  const int compressed = seed % 2 == 0 ? 2 : 1;
  Rng init_rng = rng.substream(1);
  MsfbParams params = MsfbParams::init(4, compressed, init_rng);
  // Non-zero biases move pre-activations away from the ReLU kink, where a
  // central difference is meaningless.
  for (int64_t i = 0; i < params.expand_b.numel(); ++i) {
    params.expand_b[i] = rng.uniform_in(0.1, 0.3);
  }
  Tensor features = random_tensor({3, 3, 3, 4}, rng, -1.0, 1.0);
  Tensor weights = random_tensor(features.shape(), rng, -1.0, 1.0);

  auto eval = [&]() {
    return weighted_sum_value(msfb_forward(features, params), weights);
  };

  Binder bind(true);
  ag::Var fvar = ag::leaf(features, true);
  ag::Var out = msfb_forward(bind, fvar, params);
  ag::backward(ag::sum(ag::mul_const(out, weights)));

  std::vector<NamedTensor> tensors{{"features", &features}};
  params.visit("msfb", [&](const std::string& name, Tensor& t) {
    tensors.push_back(NamedTensor{name, &t});
  });
  GradCheckAccumulator acc;
  Rng pick = rng.substream(2);
  check_tensors(
      tensors, eval,
      [&](const Tensor& t) {
        return &t == &features ? (fvar->grad.empty() ? Tensor::zeros(t.shape()) : fvar->grad)
                               : bind.grad_of(t);
      },
      0, pick, acc);
  report.passed = acc.passed();
  report.max_rel_err = acc.max_rel_err;
  report.checks = acc.checks;
  report.worst = acc.worst;
  return report;
}

GradCheckReport check_loss(uint64_t seed) {
  GradCheckReport report;
  report.component = "loss";
  report.seed = seed;
  Rng rng(derive_seed(seed, 0x4cu));

  LossConfig config;
  config.focal_gamma = seed % 2 == 0 ? 2.0 : 1.5;
  config.size_weighting = seed % 2 == 0 ? SizeWeighting::inverse_fraction
                                        : SizeWeighting::off;
  Tensor prob = random_tensor({4, 4, 4}, rng, 0.05, 0.95);
  Tensor truth({4, 4, 4});
  for (int64_t i = 0; i < truth.numel(); ++i) truth[i] = rng.uniform() < 0.2 ? 1.0 : 0.0;

  auto eval = [&]() { return zoom_loss(prob, truth, config).total; };

  ag::Var pvar = ag::leaf(prob, true);
  LossGraph g = zoom_loss_graph(pvar, truth, config);
  ag::backward(g.total);

  std::vector<NamedTensor> tensors{{"prob", &prob}};
  GradCheckAccumulator acc;
  Rng pick = rng.substream(2);
  check_tensors(
      tensors, eval, [&](const Tensor&) { return pvar->grad; }, 0, pick, acc);
  report.passed = acc.passed();
  report.max_rel_err = acc.max_rel_err;
  report.checks = acc.checks;
  report.worst = acc.worst;
  return report;
}

GradCheckReport check_end_to_end(uint64_t seed) {
  GradCheckReport report;
  report.component = "end_to_end";
  report.seed = seed;
  Rng rng(derive_seed(seed, 0x45u));

  EncoderConfig enc;
  enc.patch_size = 4;
  enc.embed_channels = 8;
  enc.num_blocks = 2;
  enc.sgpm_layers = {1, 2};
  enc.sgpm_position = SgpmPosition::both;
  enc.attention_heads = 2;
  enc.mlp_ratio = 2;
  enc.msfb_compression = 4;
  ModelParams model = ModelParams::init(enc, {8, 8, 8}, derive_seed(seed, 0x4du));

  VolumeSample sample;
  sample.sample_id = "gradcheck";
  sample.image = random_tensor({8, 8, 8}, rng, -1.0, 1.0);
  sample.label = Tensor({8, 8, 8});
  for (int i = 3; i <= 5; ++i) {
    for (int j = 3; j <= 5; ++j) {
      for (int k = 3; k <= 5; ++k) sample.label.at3(i, j, k) = 1.0;
    }
  }
  PromptSet prompts;
  prompts.sample_id = sample.sample_id;
  prompts.points.push_back(PromptPoint{4, 4, 4, PromptLabel::foreground});
  prompts.points.push_back(PromptPoint{1, 1, 1, PromptLabel::background});

  LossConfig loss_config;
  const uint64_t noise_seed = derive_seed(seed, 0x4eu);

  auto eval = [&]() {
    Binder bind(false);
    Rng noise(noise_seed);
    ForwardResult fwd = model_forward(bind, sample, prompts, model, GateMode::train,
                                      GateEstimator::soft, &noise);
    return zoom_loss(fwd.prob->value, sample.label, loss_config).total;
  };

  Binder bind(true);
  Rng noise(noise_seed);
  ForwardResult fwd = model_forward(bind, sample, prompts, model, GateMode::train,
                                    GateEstimator::soft, &noise);
  LossGraph g = zoom_loss_graph(fwd.prob, sample.label, loss_config);
  ag::backward(g.total);

  std::vector<NamedTensor> tensors;
  model.visit([&](const std::string& name, Tensor& t) {
    tensors.push_back(NamedTensor{name, &t});
  });
  GradCheckAccumulator acc;
  Rng pick = rng.substream(2);
  check_tensors(
      tensors, eval, [&](const Tensor& t) { return bind.grad_of(t); },
      /*samples_per_tensor=*/4, pick, acc);
  report.passed = acc.passed();
  report.max_rel_err = acc.max_rel_err;
  report.checks = acc.checks;
  report.worst = acc.worst;
  return report;
}

}  // namespace

GradCheckReport gradcheck_component(const std::string& component, uint64_t seed) {
  auto start = std::chrono::steady_clock::now();
  GradCheckReport report;
  if (component == "sgpm") {
    report = check_sgpm(seed);
  } else if (component == "msfb") {
    report = check_msfb(seed);
  } else if (component == "loss") {
    report = check_loss(seed);
  } else if (component == "end_to_end") {
    report = check_end_to_end(seed);
  } else {
    throw ValidationError("unknown gradcheck component '" + component +
                          "' (expected sgpm|msfb|loss|end_to_end)");
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<std::string> gradcheck_component_names() {
  return {"sgpm", "msfb", "loss", "end_to_end"};
}

}  // namespace sgpseg
