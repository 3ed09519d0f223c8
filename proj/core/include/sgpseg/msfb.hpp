// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-Scale Feature Fusion Block. Channels are compressed with a 1x1x1
// convolution, run through parallel 1/3/5 branches, averaged, re-expanded
// and rectified:
//
//   Fc  = conv1(F)                          (C  -> C')
//   Fms = relu(expand((F1 + F3 + F5) / 3))  (C' -> C)
//
// All branches use zero "same" padding so the elementwise average is shape
// aligned; the output always matches the input extents.

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "sgpseg/autograd.hpp"
#include "sgpseg/rng.hpp"

namespace sgpseg {

struct MsfbParams {
  Tensor compress_w, compress_b;  // (1,1,1,C,C'), (C')
  Tensor branch1_w, branch1_b;    // (1,1,1,C',C')
  Tensor branch3_w, branch3_b;    // (3,3,3,C',C')
  Tensor branch5_w, branch5_b;    // (5,5,5,C',C')
  Tensor expand_w, expand_b;      // (1,1,1,C',C), (C)
  int channels = 0;               // C
  int compressed = 0;             // C'

  // Kernels small-uniform (+-1/sqrt(fan_in)), biases zero.
  static MsfbParams init(int channels, int compressed, Rng& rng);

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Default bottleneck width for a given channel count and compression ratio.
int msfb_compressed_channels(int channels, int ratio);

// Pre-activation (everything except the final ReLU); exposed so linearity
// in the input can be verified directly.
ag::Var msfb_pre_activation(Binder& bind, const ag::Var& features, MsfbParams& p);

// Full block: relu(pre_activation).
ag::Var msfb_forward(Binder& bind, const ag::Var& features, MsfbParams& p);

// Graph-free convenience for inference paths and tests.
Tensor msfb_forward(const Tensor& features, const MsfbParams& p);

// Analytic multiply-accumulate based FLOP count (2 flops per MAC, biases and
// the averaging/relu ignored) for one forward pass over the given extents.
int64_t msfb_flops(const std::array<int, 4>& extents, int compressed);

}  // namespace sgpseg
