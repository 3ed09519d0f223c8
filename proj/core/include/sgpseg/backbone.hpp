// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale 3D promptable segmentation network: patch-embedding image
// encoder with self-gated fusion modules inserted into a configurable range
// of transformer blocks, a point-prompt encoder, and a cross-attention mask
// decoder with transposed-convolution upsampling back to full resolution.
//
// The model is built for one fixed volume shape; the gate's axis predictors
// are sized from the resulting feature extents.

#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sgpseg/nn.hpp"
#include "sgpseg/sgpm.hpp"

namespace sgpseg {

struct VolumeSample {
  Tensor image;  // (H,W,D), intensity-normalized
  Tensor label;  // (H,W,D), binary
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string sample_id;

  void validate() const;
};

enum class PromptLabel { foreground, background };

struct PromptPoint {
  int x = 0;  // axis 0 (H)
  int y = 0;  // axis 1 (W)
  int z = 0;  // axis 2 (D)
  PromptLabel label = PromptLabel::foreground;
};

struct PromptSet {
  std::vector<PromptPoint> points;
  std::string sample_id;

  // Rejects empty sets, sets without a foreground point, and out-of-bounds
  // points (naming the offending point index).
  void validate(const std::array<int, 3>& volume_shape) const;
};

enum class SgpmPosition { end, begin, both };  // ablation panels a / b / c

std::string to_string(SgpmPosition p);
SgpmPosition parse_sgpm_position(const std::string& s);

// Inclusive 1-based block range; lo == 0 means "no gated modules".
struct SgpmLayerRange {
  int lo = 0;
  int hi = 0;

  bool empty() const { return lo <= 0; }
  bool contains(int block) const { return !empty() && lo <= block && block <= hi; }
  std::string str() const;
};

SgpmLayerRange parse_layer_range(const std::string& s);  // "i-j" or "none"

struct EncoderConfig {
  int patch_size = 8;       // power of two
  int embed_channels = 48;  // C
  int num_blocks = 4;
  SgpmLayerRange sgpm_layers{};
  SgpmPosition sgpm_position = SgpmPosition::begin;
  int attention_heads = 2;
  int mlp_ratio = 4;
  int msfb_compression = 4;  // C' = max(1, C / ratio)

  void validate() const;
  // Number of gated-module instances implied by (layers, position).
  int sgpm_instance_count() const;
};

struct BlockParams {
  std::unique_ptr<SgpmParams> sgpm_begin;  // set when position is begin/both
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  MlpParams mlp;
  std::unique_ptr<SgpmParams> sgpm_end;  // set when position is end/both
};

struct TwoWayLayerParams {
  LayerNormParams ln_p1, ln_f1, ln_p2, ln_f2, ln_p3;
  AttentionParams prompt_to_feat;  // queries = prompt tokens
  MlpParams prompt_mlp;
  AttentionParams feat_to_prompt;  // queries = feature tokens
};

struct UpsampleStage {
  Tensor w;  // (2,2,2,ci,co)
  Tensor b;  // (co)
};

struct DecoderParams {
  std::array<TwoWayLayerParams, 2> twoway;
  std::vector<UpsampleStage> up;
  Tensor out_w;  // (1,1,1,c_last,1)
  Tensor out_b;  // (1)
};

struct PromptEncoderParams {
  Tensor label_embed;  // (2, label_dim)
  LinearParams proj;   // (pe_dim + label_dim, C)
};

// Sinusoidal features of a normalized coordinate triple; length kPeDim.
inline constexpr int kPeFrequencies = 4;
inline constexpr int kPeDim = 3 * 2 * kPeFrequencies;
inline constexpr int kLabelEmbedDim = 8;
Tensor prompt_positional_encoding(const std::array<double, 3>& normalized);

// Voxel index -> center-of-voxel normalized coordinates in (0,1).
std::array<double, 3> normalize_point(const PromptPoint& p,
                                      const std::array<int, 3>& volume_shape);

struct ModelParams {
  EncoderConfig config;
  std::array<int, 3> volume_shape{};
  Tensor patch_w, patch_b;  // (p,p,p,1,C), (C)
  Tensor token_pe_w;        // (kPeDim, C)
  std::vector<BlockParams> blocks;
  PromptEncoderParams prompt;
  Tensor dense_embed;  // (C)
  DecoderParams decoder;

  static ModelParams init(const EncoderConfig& config,
                          const std::array<int, 3>& volume_shape, uint64_t seed);

  void visit(const ParamVisitor& fn);

  std::array<int, 4> feature_extents() const;
  int64_t msfb_flops_per_call() const;
  void set_gate_temperature(double t);
  std::array<int, 3> image_shape() const { return volume_shape; }
};

struct GateTelemetry {
  int block = 0;  // 1-based, bottom-up
  SgpmPosition position = SgpmPosition::begin;
  GateDecision decision;
};

struct EncodeResult {
  ag::Var features;  // (H',W',D',C)
  std::vector<GateTelemetry> gates;
};

// rng must be non-null in train mode (gate noise source); ignored in eval.
EncodeResult encode_image(Binder& bind, const Tensor& image, ModelParams& params,
                          GateMode mode, GateEstimator estimator, Rng* rng);

struct PromptEmbeddings {
  ag::Var sparse;  // (m, C), one row per point
  ag::Var dense;   // (C), broadcast over feature tokens
};

PromptEmbeddings encode_prompts(Binder& bind, const PromptSet& prompts,
                                ModelParams& params);

// Probability volume in [0,1] at full resolution (H,W,D).
ag::Var decode_mask(Binder& bind, const ag::Var& features, const PromptEmbeddings& prompts,
                    ModelParams& params);

struct ForwardResult {
  ag::Var prob;
  std::vector<GateTelemetry> gates;
};

ForwardResult model_forward(Binder& bind, const VolumeSample& sample,
                            const PromptSet& prompts, ModelParams& params, GateMode mode,
                            GateEstimator estimator, Rng* rng);

struct EvalOutput {
  Tensor prob;
  std::vector<GateTelemetry> gates;
};

EvalOutput model_forward_eval(const VolumeSample& sample, const PromptSet& prompts,
                              const ModelParams& params);

// Zero-pads each axis up to the next multiple of `multiple` (labels padded
// with background). No-op when already divisible.
VolumeSample pad_to_multiple(const VolumeSample& sample, int multiple);
Tensor crop_to_shape(const Tensor& prob, const std::array<int, 3>& shape);

}  // namespace sgpseg
