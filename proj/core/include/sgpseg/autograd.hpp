// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor-level reverse-mode automatic differentiation on a dynamically
// built tape. Ops are free functions that produce graph nodes; backward()
// walks the tape in reverse topological order. Everything runs in double
// precision so analytic gradients can be held to tight finite-difference
// tolerances.
//
// Determinism contract: every op computes each output (and each gradient)
// entry with a fixed sequential summation order, flat index ascending.

#pragma once

#include <array>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "sgpseg/tensor.hpp"

namespace sgpseg::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;
  bool requires_grad = false;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

// ---- graph roots -----------------------------------------------------------
Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
Var constant_scalar(double v);

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var vdiv(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);  // scale*x + shift
Var scale(const Var& x, double s);
Var mul_const(const Var& x, const Tensor& c);
Var relu(const Var& x);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var tanh_op(const Var& x);
Var log_op(const Var& x);
Var pow_const(const Var& x, double exponent);
Var clamp(const Var& x, double lo, double hi);

// ---- shape -----------------------------------------------------------------
Var reshape(const Var& x, std::vector<int> shape);
Var slice_cols(const Var& x, int c0, int c1);          // x is (n, C), result (n, c1-c0)
Var concat_cols(const std::vector<Var>& parts);        // all (n, Ci)

// ---- reductions & broadcasts ----------------------------------------------
Var sum(const Var& x);          // -> {1}
Var mean(const Var& x);         // -> {1}
Var axis_mean(const Var& x, int axis);                 // 4D -> {extent(axis)}
Var add_rowvec(const Var& x, const Var& v);            // (n,C) + (C) broadcast
Var dot(const Var& a, const Var& b);                   // 1D·1D -> {1}

// ---- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
Var linear(const Var& x, const Var& w, const Var& b);  // (n,in)x(in,out)+(out)
Var softmax(const Var& x);                             // 1D
Var softmax_rows(const Var& x);                        // 2D, per row
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// ---- convolution -----------------------------------------------------------
// x: (H,W,D,Ci), k: (kh,kw,kd,Ci,Co), bias: (Co) or nullptr. Zero padding.
Var conv3d(const Var& x, const Var& k, const Var& bias, int stride, int pad);
// Kernel 2, stride 2 transposed convolution: (H,W,D,Ci) -> (2H,2W,2D,Co).
Var conv_transpose3d_k2s2(const Var& x, const Var& k, const Var& bias);

// ---- gating ----------------------------------------------------------------
// gate*(enhanced) + (1-gate)*(base); gate is a {1} var.
Var blend(const Var& base, const Var& enhanced, const Var& gate);
// Straight-through: forward uses the hard gate [soft>0.5], backward flows
// through the soft gate as if blend() had been used.
Var blend_straight_through(const Var& base, const Var& enhanced, const Var& soft_gate);

// ---- engine ----------------------------------------------------------------
// Seeds d(root)/d(root) = 1 (root must be scalar) and accumulates gradients
// into every reachable requires_grad node.
void backward(const Var& root);

// Plain matmul on tensors (shared by op implementations and the optimizer-free
// eval paths); C = op(A) * op(B).
Tensor mm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);

}  // namespace sgpseg::ag

namespace sgpseg {

// Binds parameter tensors to graph leaves, one leaf per distinct tensor, so
// that a parameter used twice in one graph accumulates both gradient
// contributions. Values are copied into the leaf; the source tensor is never
// written.
class Binder {
 public:
  explicit Binder(bool with_grad = true) : with_grad_(with_grad) {}

  ag::Var bind(const Tensor& t) {
    auto it = bound_.find(&t);
    if (it != bound_.end()) return it->second;
    ag::Var v = ag::leaf(t, with_grad_);
    bound_.emplace(&t, v);
    return v;
  }

  // Gradient of the bound leaf, or zeros if the tensor never entered the
  // graph (e.g. a parameter group unused under the current configuration).
  Tensor grad_of(const Tensor& t) const {
    auto it = bound_.find(&t);
    if (it == bound_.end() || it->second->grad.empty()) return Tensor::zeros(t.shape());
    return it->second->grad;
  }

  bool with_grad() const { return with_grad_; }

 private:
  bool with_grad_;
  std::unordered_map<const Tensor*, ag::Var> bound_;
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

}  // namespace sgpseg
