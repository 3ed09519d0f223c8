// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/nn.hpp"

#include <cmath>

namespace sgpseg {

void init_uniform_fanin(Tensor& t, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform_in(-bound, bound);
}

LinearParams LinearParams::init(int in, int out, Rng& rng) {
  LinearParams p;
  p.w = Tensor({in, out});
  p.b = Tensor({out});
  init_uniform_fanin(p.w, in, rng);
  return p;
}

void LinearParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w", w);
  fn(prefix + ".b", b);
}

ag::Var linear(Binder& bind, const ag::Var& x, LinearParams& p) {
  return ag::linear(x, bind.bind(p.w), bind.bind(p.b));
}

LayerNormParams LayerNormParams::init(int dim) {
  LayerNormParams p;
  p.gamma = Tensor::full({dim}, 1.0);
  p.beta = Tensor({dim});
  return p;
}

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

ag::Var layer_norm(Binder& bind, const ag::Var& x, LayerNormParams& p) {
  return ag::layer_norm(x, bind.bind(p.gamma), bind.bind(p.beta));
}

AttentionParams AttentionParams::init(int channels, int heads, Rng& rng) {
  SGPSEG_CHECK(heads >= 1 && channels % heads == 0,
               "attention: channels " << channels << " not divisible by heads "
                                      << heads);
  AttentionParams p;
  p.q = LinearParams::init(channels, channels, rng);
  p.k = LinearParams::init(channels, channels, rng);
  p.v = LinearParams::init(channels, channels, rng);
  p.o = LinearParams::init(channels, channels, rng);
  p.heads = heads;
  return p;
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  q.visit(prefix + ".q", fn);
  k.visit(prefix + ".k", fn);
  v.visit(prefix + ".v", fn);
  o.visit(prefix + ".o", fn);
}

ag::Var attention(Binder& bind, const ag::Var& queries_in, const ag::Var& keys_in,
                  AttentionParams& p) {
  const int channels = queries_in->value.extent(1);
  const int dh = channels / p.heads;
  ag::Var q = linear(bind, queries_in, p.q);
  ag::Var k = linear(bind, keys_in, p.k);
  ag::Var v = linear(bind, keys_in, p.v);
  std::vector<ag::Var> head_outs;
  head_outs.reserve(static_cast<size_t>(p.heads));
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < p.heads; ++h) {
    ag::Var qh = ag::slice_cols(q, h * dh, (h + 1) * dh);
    ag::Var kh = ag::slice_cols(k, h * dh, (h + 1) * dh);
    ag::Var vh = ag::slice_cols(v, h * dh, (h + 1) * dh);
    ag::Var scores = ag::scale(ag::matmul(qh, kh, false, true), inv_sqrt_dh);
    ag::Var attn = ag::softmax_rows(scores);
    head_outs.push_back(ag::matmul(attn, vh));
  }
  ag::Var merged = p.heads == 1 ? head_outs[0] : ag::concat_cols(head_outs);
  return linear(bind, merged, p.o);
}

MlpParams MlpParams::init(int channels, int hidden, Rng& rng) {
  MlpParams p;
  p.fc1 = LinearParams::init(channels, hidden, rng);
  p.fc2 = LinearParams::init(hidden, channels, rng);
  return p;
}

void MlpParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

ag::Var mlp(Binder& bind, const ag::Var& x, MlpParams& p) {
  return linear(bind, ag::gelu(linear(bind, x, p.fc1)), p.fc2);
}

}  // namespace sgpseg
