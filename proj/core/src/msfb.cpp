// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/msfb.hpp"

#include <algorithm>

#include "sgpseg/nn.hpp"

namespace sgpseg {

MsfbParams MsfbParams::init(int channels, int compressed, Rng& rng) {
  SGPSEG_CHECK(channels >= 1, "msfb: channels must be >= 1, got " << channels);
  SGPSEG_CHECK(1 <= compressed && compressed <= channels,
               "msfb: compressed width " << compressed << " must be in [1, "
                                         << channels << "]");
  MsfbParams p;
  p.channels = channels;
  p.compressed = compressed;
  p.compress_w = Tensor({1, 1, 1, channels, compressed});
  p.compress_b = Tensor({compressed});
  p.branch1_w = Tensor({1, 1, 1, compressed, compressed});
  p.branch1_b = Tensor({compressed});
  p.branch3_w = Tensor({3, 3, 3, compressed, compressed});
  p.branch3_b = Tensor({compressed});
  p.branch5_w = Tensor({5, 5, 5, compressed, compressed});
  p.branch5_b = Tensor({compressed});
  p.expand_w = Tensor({1, 1, 1, compressed, channels});
  p.expand_b = Tensor({channels});
  init_uniform_fanin(p.compress_w, channels, rng);
  init_uniform_fanin(p.branch1_w, compressed, rng);
  init_uniform_fanin(p.branch3_w, 27 * compressed, rng);
  init_uniform_fanin(p.branch5_w, 125 * compressed, rng);
  init_uniform_fanin(p.expand_w, compressed, rng);
  return p;
}

void MsfbParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".compress.w", compress_w);
  fn(prefix + ".compress.b", compress_b);
  fn(prefix + ".branch1.w", branch1_w);
  fn(prefix + ".branch1.b", branch1_b);
  fn(prefix + ".branch3.w", branch3_w);
  fn(prefix + ".branch3.b", branch3_b);
  fn(prefix + ".branch5.w", branch5_w);
  fn(prefix + ".branch5.b", branch5_b);
  fn(prefix + ".expand.w", expand_w);
  fn(prefix + ".expand.b", expand_b);
}

int msfb_compressed_channels(int channels, int ratio) {
  SGPSEG_CHECK(ratio >= 1, "msfb: compression ratio must be >= 1, got " << ratio);
  return std::max(1, channels / ratio);
}

namespace {

void check_input(const Tensor& f, const MsfbParams& p) {
  SGPSEG_CHECK(f.ndim() == 4, "msfb: input must be 4D (h,w,d,c), got " << f.shape_str());
  SGPSEG_CHECK(f.extent(3) == p.channels, "msfb: input has " << f.extent(3)
                                                             << " channels, block expects "
                                                             << p.channels);
}

}  // namespace

ag::Var msfb_pre_activation(Binder& bind, const ag::Var& features, MsfbParams& p) {
  check_input(features->value, p);
  ag::Var fc = ag::conv3d(features, bind.bind(p.compress_w), bind.bind(p.compress_b),
                          /*stride=*/1, /*pad=*/0);
  ag::Var f1 = ag::conv3d(fc, bind.bind(p.branch1_w), bind.bind(p.branch1_b), 1, 0);
  ag::Var f3 = ag::conv3d(fc, bind.bind(p.branch3_w), bind.bind(p.branch3_b), 1, 1);
  ag::Var f5 = ag::conv3d(fc, bind.bind(p.branch5_w), bind.bind(p.branch5_b), 1, 2);
  ag::Var fused = ag::scale(ag::add(ag::add(f1, f3), f5), 1.0 / 3.0);
  return ag::conv3d(fused, bind.bind(p.expand_w), bind.bind(p.expand_b), 1, 0);
}

ag::Var msfb_forward(Binder& bind, const ag::Var& features, MsfbParams& p) {
  return ag::relu(msfb_pre_activation(bind, features, p));
}

Tensor msfb_forward(const Tensor& features, const MsfbParams& p) {
  Binder bind(/*with_grad=*/false);
  // const_cast is safe: graph building only reads parameter tensors.
  return msfb_forward(bind, ag::constant(features), const_cast<MsfbParams&>(p))->value;
}

int64_t msfb_flops(const std::array<int, 4>& extents, int compressed) {
  const int64_t voxels =
      static_cast<int64_t>(extents[0]) * extents[1] * extents[2];
  const int64_t c = extents[3];
  const int64_t cp = compressed;
  int64_t macs = 0;
  macs += voxels * c * cp;                    // compress
  macs += voxels * cp * cp * (1 + 27 + 125);  // branches
  macs += voxels * cp * c;                    // expand
  return 2 * macs;
}

}  // namespace sgpseg
