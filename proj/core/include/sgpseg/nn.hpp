// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameterized layers used by the encoder and decoder. Each struct owns its
// tensors and exposes visit() so the optimizer and checkpoint code can
// enumerate parameters in one canonical order.

#pragma once

#include <string>

#include "sgpseg/autograd.hpp"
#include "sgpseg/rng.hpp"

namespace sgpseg {

// Uniform in +-1/sqrt(fan_in).
void init_uniform_fanin(Tensor& t, int fan_in, Rng& rng);

struct LinearParams {
  Tensor w;  // (in, out)
  Tensor b;  // (out)

  static LinearParams init(int in, int out, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

ag::Var linear(Binder& bind, const ag::Var& x, LinearParams& p);

struct LayerNormParams {
  Tensor gamma;  // (dim), init 1
  Tensor beta;   // (dim), init 0

  static LayerNormParams init(int dim);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

ag::Var layer_norm(Binder& bind, const ag::Var& x, LayerNormParams& p);

// Multi-head scaled dot-product attention. Self-attention when queries and
// keys come from the same sequence; cross-attention otherwise. Softmax over
// the key axis makes the output permutation-invariant in the key/value rows.
struct AttentionParams {
  LinearParams q, k, v, o;
  int heads = 1;

  static AttentionParams init(int channels, int heads, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

ag::Var attention(Binder& bind, const ag::Var& queries_in, const ag::Var& keys_in,
                  AttentionParams& p);

// Two-layer MLP with GELU.
struct MlpParams {
  LinearParams fc1, fc2;

  static MlpParams init(int channels, int hidden, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

ag::Var mlp(Binder& bind, const ag::Var& x, MlpParams& p);

}  // namespace sgpseg
