// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/backbone.hpp"

#include <cmath>

namespace sgpseg {

void VolumeSample::validate() const {
  SGPSEG_CHECK(image.ndim() == 3, "sample " << sample_id << ": image must be 3D, got "
                                            << image.shape_str());
  SGPSEG_CHECK(image.same_shape(label), "sample " << sample_id
                                                  << ": image and label shapes differ: "
                                                  << image.shape_str() << " vs "
                                                  << label.shape_str());
  int64_t bad = image.first_nonfinite();
  SGPSEG_CHECK(bad < 0, "sample " << sample_id << ": non-finite image value at flat index "
                                  << bad);
  for (int64_t i = 0; i < label.numel(); ++i) {
    SGPSEG_CHECK(label[i] == 0.0 || label[i] == 1.0,
                 "sample " << sample_id << ": label must be binary, found " << label[i]
                           << " at flat index " << i);
  }
}

void PromptSet::validate(const std::array<int, 3>& volume_shape) const {
  SGPSEG_CHECK(!points.empty(), "prompt set " << sample_id << " is empty");
  bool has_fg = false;
  for (size_t i = 0; i < points.size(); ++i) {
    const PromptPoint& p = points[i];
    SGPSEG_CHECK(p.x >= 0 && p.x < volume_shape[0] && p.y >= 0 && p.y < volume_shape[1] &&
                     p.z >= 0 && p.z < volume_shape[2],
                 "prompt set " << sample_id << ": point " << i << " at (" << p.x << ","
                               << p.y << "," << p.z << ") lies outside volume extents ("
                               << volume_shape[0] << "," << volume_shape[1] << ","
                               << volume_shape[2] << ")");
    has_fg = has_fg || p.label == PromptLabel::foreground;
  }
  SGPSEG_CHECK(has_fg, "prompt set " << sample_id << " has no foreground point");
}

std::string to_string(SgpmPosition p) {
  switch (p) {
    case SgpmPosition::end:
      return "end";
    case SgpmPosition::begin:
      return "begin";
    case SgpmPosition::both:
      return "both";
  }
  return "?";
}

SgpmPosition parse_sgpm_position(const std::string& s) {
  if (s == "a" || s == "end") return SgpmPosition::end;
  if (s == "b" || s == "begin") return SgpmPosition::begin;
  if (s == "c" || s == "both") return SgpmPosition::both;
  throw ValidationError("unknown gated-module position '" + s +
                        "' (expected a|b|c or end|begin|both)");
}

std::string SgpmLayerRange::str() const {
  if (empty()) return "none";
  return std::to_string(lo) + "-" + std::to_string(hi);
}

SgpmLayerRange parse_layer_range(const std::string& s) {
  if (s.empty() || s == "none" || s == "0") return SgpmLayerRange{};
  auto dash = s.find('-');
  try {
    if (dash == std::string::npos) {
      int v = std::stoi(s);
      return SgpmLayerRange{v, v};
    }
    int lo = std::stoi(s.substr(0, dash));
    int hi = std::stoi(s.substr(dash + 1));
    return SgpmLayerRange{lo, hi};
  } catch (const std::exception&) {
    throw ValidationError("cannot parse layer range '" + s + "' (expected i-j or none)");
  }
}

void EncoderConfig::validate() const {
  SGPSEG_CHECK(patch_size >= 1 && (patch_size & (patch_size - 1)) == 0,
               "encoder: patch_size must be a power of two, got " << patch_size);
  SGPSEG_CHECK(embed_channels >= 1, "encoder: embed_channels must be >= 1");
  SGPSEG_CHECK(num_blocks >= 1, "encoder: num_blocks must be >= 1");
  SGPSEG_CHECK(attention_heads >= 1 && embed_channels % attention_heads == 0,
               "encoder: embed_channels " << embed_channels << " not divisible by heads "
                                          << attention_heads);
  SGPSEG_CHECK(mlp_ratio >= 1, "encoder: mlp_ratio must be >= 1");
  SGPSEG_CHECK(msfb_compression >= 1, "encoder: msfb_compression must be >= 1");
  if (!sgpm_layers.empty()) {
    SGPSEG_CHECK(1 <= sgpm_layers.lo && sgpm_layers.lo <= sgpm_layers.hi &&
                     sgpm_layers.hi <= num_blocks,
                 "encoder: layer range " << sgpm_layers.str() << " invalid for "
                                         << num_blocks << " blocks");
  }
}

int EncoderConfig::sgpm_instance_count() const {
  if (sgpm_layers.empty()) return 0;
  int span = sgpm_layers.hi - sgpm_layers.lo + 1;
  return sgpm_position == SgpmPosition::both ? 2 * span : span;
}

Tensor prompt_positional_encoding(const std::array<double, 3>& normalized) {
  Tensor pe({kPeDim});
  int idx = 0;
  for (int axis = 0; axis < 3; ++axis) {
    double u = normalized[static_cast<size_t>(axis)];
    for (int k = 0; k < kPeFrequencies; ++k) {
      double freq = std::pow(2.0, k) * 2.0 * 3.141592653589793;
      pe[idx++] = std::sin(freq * u);
      pe[idx++] = std::cos(freq * u);
    }
  }
  return pe;
}

std::array<double, 3> normalize_point(const PromptPoint& p,
                                      const std::array<int, 3>& volume_shape) {
  return {(p.x + 0.5) / volume_shape[0], (p.y + 0.5) / volume_shape[1],
          (p.z + 0.5) / volume_shape[2]};
}

namespace {

int int_log2(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

std::array<int, 4> feature_extents_for(const EncoderConfig& config,
                                       const std::array<int, 3>& volume_shape) {
  return {volume_shape[0] / config.patch_size, volume_shape[1] / config.patch_size,
          volume_shape[2] / config.patch_size, config.embed_channels};
}

}  // namespace

ModelParams ModelParams::init(const EncoderConfig& config,
                              const std::array<int, 3>& volume_shape, uint64_t seed) {
  config.validate();
  for (int axis = 0; axis < 3; ++axis) {
    SGPSEG_CHECK(volume_shape[static_cast<size_t>(axis)] % config.patch_size == 0,
                 "model: volume extent " << volume_shape[static_cast<size_t>(axis)]
                                         << " on axis " << axis
                                         << " not divisible by patch size "
                                         << config.patch_size);
  }
  ModelParams m;
  m.config = config;
  m.volume_shape = volume_shape;
  const int c = config.embed_channels;
  const int p = config.patch_size;
  Rng root(seed);

  Rng patch_rng = root.substream(1);
  m.patch_w = Tensor({p, p, p, 1, c});
  m.patch_b = Tensor({c});
  init_uniform_fanin(m.patch_w, p * p * p, patch_rng);
  m.token_pe_w = Tensor({kPeDim, c});
  init_uniform_fanin(m.token_pe_w, kPeDim, patch_rng);

  const auto fx = feature_extents_for(config, volume_shape);
  const int compressed = msfb_compressed_channels(c, config.msfb_compression);
  m.blocks.resize(static_cast<size_t>(config.num_blocks));
  for (int b = 1; b <= config.num_blocks; ++b) {
    Rng block_rng = root.substream(100 + static_cast<uint64_t>(b));
    BlockParams& blk = m.blocks[static_cast<size_t>(b - 1)];
    blk.ln1 = LayerNormParams::init(c);
    blk.ln2 = LayerNormParams::init(c);
    blk.attn = AttentionParams::init(c, config.attention_heads, block_rng);
    blk.mlp = MlpParams::init(c, config.mlp_ratio * c, block_rng);
    if (config.sgpm_layers.contains(b)) {
      if (config.sgpm_position != SgpmPosition::end) {
        Rng r = block_rng.substream(1);
        blk.sgpm_begin = std::make_unique<SgpmParams>(SgpmParams::init(fx, compressed, r));
      }
      if (config.sgpm_position != SgpmPosition::begin) {
        Rng r = block_rng.substream(2);
        blk.sgpm_end = std::make_unique<SgpmParams>(SgpmParams::init(fx, compressed, r));
      }
    }
  }

  Rng prompt_rng = root.substream(2);
  m.prompt.label_embed = Tensor({2, kLabelEmbedDim});
  init_uniform_fanin(m.prompt.label_embed, kLabelEmbedDim, prompt_rng);
  m.prompt.proj = LinearParams::init(kPeDim + kLabelEmbedDim, c, prompt_rng);
  m.dense_embed = Tensor({c});

  Rng dec_rng = root.substream(3);
  for (auto& layer : m.decoder.twoway) {
    layer.ln_p1 = LayerNormParams::init(c);
    layer.ln_f1 = LayerNormParams::init(c);
    layer.ln_p2 = LayerNormParams::init(c);
    layer.ln_f2 = LayerNormParams::init(c);
    layer.ln_p3 = LayerNormParams::init(c);
    layer.prompt_to_feat = AttentionParams::init(c, config.attention_heads, dec_rng);
    layer.prompt_mlp = MlpParams::init(c, config.mlp_ratio * c, dec_rng);
    layer.feat_to_prompt = AttentionParams::init(c, config.attention_heads, dec_rng);
  }
  int stages = int_log2(p);
  int cin = c;
  for (int s = 0; s < stages; ++s) {
    int cout = std::max(4, cin / 2);
    UpsampleStage stage;
    stage.w = Tensor({2, 2, 2, cin, cout});
    stage.b = Tensor({cout});
    init_uniform_fanin(stage.w, cin, dec_rng);
    m.decoder.up.push_back(std::move(stage));
    cin = cout;
  }
  m.decoder.out_w = Tensor({1, 1, 1, cin, 1});
  m.decoder.out_b = Tensor({1});
  init_uniform_fanin(m.decoder.out_w, cin, dec_rng);
  // Mild background prior so early predictions do not start half-on.
  m.decoder.out_b[0] = -2.0;
  return m;
}

void ModelParams::visit(const ParamVisitor& fn) {
  fn("patch_embed.w", patch_w);
  fn("patch_embed.b", patch_b);
  fn("token_pe.w", token_pe_w);
  for (size_t i = 0; i < blocks.size(); ++i) {
    std::string prefix = "block" + std::to_string(i + 1);
    BlockParams& blk = blocks[i];
    if (blk.sgpm_begin) blk.sgpm_begin->visit(prefix + ".sgpm_begin", fn);
    blk.ln1.visit(prefix + ".ln1", fn);
    blk.attn.visit(prefix + ".attn", fn);
    blk.ln2.visit(prefix + ".ln2", fn);
    blk.mlp.visit(prefix + ".mlp", fn);
    if (blk.sgpm_end) blk.sgpm_end->visit(prefix + ".sgpm_end", fn);
  }
  fn("prompt.label_embed", prompt.label_embed);
  prompt.proj.visit("prompt.proj", fn);
  fn("dense_embed", dense_embed);
  for (size_t j = 0; j < decoder.twoway.size(); ++j) {
    std::string prefix = "decoder.twoway" + std::to_string(j + 1);
    TwoWayLayerParams& tw = decoder.twoway[j];
    tw.ln_p1.visit(prefix + ".ln_p1", fn);
    tw.ln_f1.visit(prefix + ".ln_f1", fn);
    tw.prompt_to_feat.visit(prefix + ".p2f", fn);
    tw.ln_p2.visit(prefix + ".ln_p2", fn);
    tw.prompt_mlp.visit(prefix + ".mlp", fn);
    tw.ln_f2.visit(prefix + ".ln_f2", fn);
    tw.ln_p3.visit(prefix + ".ln_p3", fn);
    tw.feat_to_prompt.visit(prefix + ".f2p", fn);
  }
  for (size_t s = 0; s < decoder.up.size(); ++s) {
    std::string prefix = "decoder.up" + std::to_string(s + 1);
    fn(prefix + ".w", decoder.up[s].w);
    fn(prefix + ".b", decoder.up[s].b);
  }
  fn("decoder.out.w", decoder.out_w);
  fn("decoder.out.b", decoder.out_b);
}

std::array<int, 4> ModelParams::feature_extents() const {
  return feature_extents_for(config, volume_shape);
}

int64_t ModelParams::msfb_flops_per_call() const {
  const int compressed =
      msfb_compressed_channels(config.embed_channels, config.msfb_compression);
  return msfb_flops(feature_extents(), compressed);
}

void ModelParams::set_gate_temperature(double t) {
  SGPSEG_CHECK(t > 0.0, "gate temperature must be > 0, got " << t);
  for (BlockParams& blk : blocks) {
    if (blk.sgpm_begin) blk.sgpm_begin->gate.temperature = t;
    if (blk.sgpm_end) blk.sgpm_end->gate.temperature = t;
  }
}

namespace {

// Constant token positional encodings for the feature grid, (n, kPeDim).
Tensor token_positional_encodings(const std::array<int, 4>& fx) {
  const int n = fx[0] * fx[1] * fx[2];
  Tensor pe({n, kPeDim});
  int row = 0;
  for (int h = 0; h < fx[0]; ++h) {
    for (int w = 0; w < fx[1]; ++w) {
      for (int d = 0; d < fx[2]; ++d) {
        Tensor one = prompt_positional_encoding(
            {(h + 0.5) / fx[0], (w + 0.5) / fx[1], (d + 0.5) / fx[2]});
        for (int k = 0; k < kPeDim; ++k) pe.at2(row, k) = one[k];
        ++row;
      }
    }
  }
  return pe;
}

ag::Var run_sgpm(Binder& bind, const ag::Var& tokens, SgpmParams& params,
                 const std::array<int, 4>& fx, GateMode mode, GateEstimator estimator,
                 Rng* rng, int block, SgpmPosition pos, std::vector<GateTelemetry>& gates) {
  ag::Var grid = ag::reshape(tokens, {fx[0], fx[1], fx[2], fx[3]});
  double eps = 0.5;
  if (mode == GateMode::train) {
    SGPSEG_CHECK(rng != nullptr, "train-mode forward needs a noise stream");
    eps = rng->uniform_open();
  }
  SgpmOutput out = sgpm_forward(bind, grid, params, mode, estimator, eps);
  gates.push_back(GateTelemetry{block, pos, out.decision});
  const int n = fx[0] * fx[1] * fx[2];
  return ag::reshape(out.features, {n, fx[3]});
}

}  // namespace

EncodeResult encode_image(Binder& bind, const Tensor& image, ModelParams& params,
                          GateMode mode, GateEstimator estimator, Rng* rng) {
  const auto& vs = params.volume_shape;
  SGPSEG_CHECK(image.ndim() == 3, "encode_image: image must be 3D, got "
                                      << image.shape_str());
  for (int axis = 0; axis < 3; ++axis) {
    SGPSEG_CHECK(image.extent(axis) % params.config.patch_size == 0,
                 "encode_image: extent " << image.extent(axis) << " on axis " << axis
                                         << " not divisible by patch size "
                                         << params.config.patch_size
                                         << " (pad the volume first)");
    SGPSEG_CHECK(image.extent(axis) == vs[static_cast<size_t>(axis)],
                 "encode_image: image extent " << image.extent(axis) << " on axis " << axis
                                               << " does not match the model's build shape "
                                               << vs[static_cast<size_t>(axis)]);
  }
  const auto fx = params.feature_extents();
  const int n = fx[0] * fx[1] * fx[2];
  const int c = fx[3];

  ag::Var x4 = ag::reshape(ag::constant(image), {vs[0], vs[1], vs[2], 1});
  ag::Var grid = ag::conv3d(x4, bind.bind(params.patch_w), bind.bind(params.patch_b),
                            params.config.patch_size, 0);
  ag::Var tokens = ag::reshape(grid, {n, c});
  ag::Var pe = ag::matmul(ag::constant(token_positional_encodings(fx)),
                          bind.bind(params.token_pe_w));
  tokens = ag::add(tokens, pe);

  EncodeResult result;
  for (int b = 1; b <= params.config.num_blocks; ++b) {
    BlockParams& blk = params.blocks[static_cast<size_t>(b - 1)];
    if (blk.sgpm_begin) {
      tokens = run_sgpm(bind, tokens, *blk.sgpm_begin, fx, mode, estimator, rng, b,
                        SgpmPosition::begin, result.gates);
    }
    ag::Var normed = layer_norm(bind, tokens, blk.ln1);
    tokens = ag::add(tokens, attention(bind, normed, normed, blk.attn));
    tokens = ag::add(tokens, mlp(bind, layer_norm(bind, tokens, blk.ln2), blk.mlp));
    if (blk.sgpm_end) {
      tokens = run_sgpm(bind, tokens, *blk.sgpm_end, fx, mode, estimator, rng, b,
                        SgpmPosition::end, result.gates);
    }
  }
  result.features = ag::reshape(tokens, {fx[0], fx[1], fx[2], fx[3]});
  return result;
}

PromptEmbeddings encode_prompts(Binder& bind, const PromptSet& prompts,
                                ModelParams& params) {
  prompts.validate(params.volume_shape);
  const int m = static_cast<int>(prompts.points.size());
  Tensor pe({m, kPeDim});
  Tensor onehot({m, 2});
  for (int i = 0; i < m; ++i) {
    const PromptPoint& p = prompts.points[static_cast<size_t>(i)];
    Tensor one = prompt_positional_encoding(normalize_point(p, params.volume_shape));
    for (int k = 0; k < kPeDim; ++k) pe.at2(i, k) = one[k];
    onehot.at2(i, p.label == PromptLabel::foreground ? 0 : 1) = 1.0;
  }
  ag::Var label_part =
      ag::matmul(ag::constant(onehot), bind.bind(params.prompt.label_embed));
  ag::Var features = ag::concat_cols({ag::constant(pe), label_part});
  PromptEmbeddings out;
  out.sparse = linear(bind, features, params.prompt.proj);
  out.dense = bind.bind(params.dense_embed);
  return out;
}

ag::Var decode_mask(Binder& bind, const ag::Var& features, const PromptEmbeddings& prompts,
                    ModelParams& params) {
  const auto fx = params.feature_extents();
  SGPSEG_CHECK(features->value.ndim() == 4 && features->value.extent(0) == fx[0] &&
                   features->value.extent(1) == fx[1] &&
                   features->value.extent(2) == fx[2] &&
                   features->value.extent(3) == fx[3],
               "decode_mask: feature shape " << features->value.shape_str()
                                             << " does not match encoder output");
  const int n = fx[0] * fx[1] * fx[2];
  const int c = fx[3];
  ag::Var f = ag::reshape(features, {n, c});
  f = ag::add_rowvec(f, prompts.dense);
  ag::Var p = prompts.sparse;
  for (TwoWayLayerParams& tw : params.decoder.twoway) {
    p = ag::add(p, attention(bind, layer_norm(bind, p, tw.ln_p1),
                             layer_norm(bind, f, tw.ln_f1), tw.prompt_to_feat));
    p = ag::add(p, mlp(bind, layer_norm(bind, p, tw.ln_p2), tw.prompt_mlp));
    f = ag::add(f, attention(bind, layer_norm(bind, f, tw.ln_f2),
                             layer_norm(bind, p, tw.ln_p3), tw.feat_to_prompt));
  }
  ag::Var grid = ag::reshape(f, {fx[0], fx[1], fx[2], c});
  for (UpsampleStage& stage : params.decoder.up) {
    grid = ag::gelu(ag::conv_transpose3d_k2s2(grid, bind.bind(stage.w), bind.bind(stage.b)));
  }
  ag::Var logits =
      ag::conv3d(grid, bind.bind(params.decoder.out_w), bind.bind(params.decoder.out_b), 1, 0);
  ag::Var prob = ag::sigmoid(logits);
  return ag::reshape(prob, {params.volume_shape[0], params.volume_shape[1],
                            params.volume_shape[2]});
}

ForwardResult model_forward(Binder& bind, const VolumeSample& sample,
                            const PromptSet& prompts, ModelParams& params, GateMode mode,
                            GateEstimator estimator, Rng* rng) {
  sample.validate();
  EncodeResult enc = encode_image(bind, sample.image, params, mode, estimator, rng);
  PromptEmbeddings pe = encode_prompts(bind, prompts, params);
  ForwardResult out;
  out.prob = decode_mask(bind, enc.features, pe, params);
  out.gates = std::move(enc.gates);
  return out;
}

EvalOutput model_forward_eval(const VolumeSample& sample, const PromptSet& prompts,
                              const ModelParams& params) {
  Binder bind(/*with_grad=*/false);
  // Graph building never mutates parameters.
  ModelParams& p = const_cast<ModelParams&>(params);
  ForwardResult r = model_forward(bind, sample, prompts, p, GateMode::eval,
                                  GateEstimator::soft, nullptr);
  return EvalOutput{r.prob->value, std::move(r.gates)};
}

VolumeSample pad_to_multiple(const VolumeSample& sample, int multiple) {
  SGPSEG_CHECK(multiple >= 1, "pad_to_multiple: multiple must be >= 1");
  auto rounded = [multiple](int v) { return ((v + multiple - 1) / multiple) * multiple; };
  const int h = sample.image.extent(0);
  const int w = sample.image.extent(1);
  const int d = sample.image.extent(2);
  const int hp = rounded(h);
  const int wp = rounded(w);
  const int dp = rounded(d);
  if (hp == h && wp == w && dp == d) return sample;
  VolumeSample out;
  out.sample_id = sample.sample_id;
  out.spacing = sample.spacing;
  out.image = Tensor({hp, wp, dp});
  out.label = Tensor({hp, wp, dp});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int k = 0; k < d; ++k) {
        out.image.at3(i, j, k) = sample.image.at3(i, j, k);
        out.label.at3(i, j, k) = sample.label.at3(i, j, k);
      }
    }
  }
  return out;
}

Tensor crop_to_shape(const Tensor& prob, const std::array<int, 3>& shape) {
  SGPSEG_CHECK(prob.ndim() == 3, "crop_to_shape expects a 3D tensor");
  SGPSEG_CHECK(prob.extent(0) >= shape[0] && prob.extent(1) >= shape[1] &&
                   prob.extent(2) >= shape[2],
               "crop_to_shape: target " << shape[0] << "x" << shape[1] << "x" << shape[2]
                                        << " exceeds source " << prob.shape_str());
  if (prob.extent(0) == shape[0] && prob.extent(1) == shape[1] && prob.extent(2) == shape[2]) {
    return prob;
  }
  Tensor out({shape[0], shape[1], shape[2]});
  for (int i = 0; i < shape[0]; ++i) {
    for (int j = 0; j < shape[1]; ++j) {
      for (int k = 0; k < shape[2]; ++k) out.at3(i, j, k) = prob.at3(i, j, k);
    }
  }
  return out;
}

}  // namespace sgpseg
