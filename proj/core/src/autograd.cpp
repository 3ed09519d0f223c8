// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace sgpseg::ag {

namespace {

Var make_node(Tensor value, std::vector<Var> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const Var& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  SGPSEG_CHECK(a->value.same_shape(b->value),
               op << ": shape mismatch " << a->value.shape_str() << " vs "
                  << b->value.shape_str());
}

// Unary elementwise op from value fn and local-derivative fn.
template <typename F, typename DF>
Var unary_elementwise(const Var& x, F f, DF df) {
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(x->value[i]);
  Var n = make_node(std::move(out), {x});
  if (n->requires_grad) {
    n->backprop = [df](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& gx = x_->ensure_grad();
      for (int64_t i = 0; i < gx.numel(); ++i) {
        gx[i] += self.grad[i] * df(x_->value[i], self.value[i]);
      }
    };
  }
  return n;
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  Var n = make_node(std::move(out), {a, b});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      for (int side = 0; side < 2; ++side) {
        Var& p = self.parents[static_cast<size_t>(side)];
        if (!p->requires_grad) continue;
        Tensor& g = p->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return n;
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
  Var n = make_node(std::move(out), {a, b});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Var& a_ = self.parents[0];
      Var& b_ = self.parents[1];
      if (a_->requires_grad) {
        Tensor& g = a_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
      }
      if (b_->requires_grad) {
        Tensor& g = b_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
      }
    };
  }
  return n;
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
  Var n = make_node(std::move(out), {a, b});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Var& a_ = self.parents[0];
      Var& b_ = self.parents[1];
      if (a_->requires_grad) {
        Tensor& g = a_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b_->value[i];
      }
      if (b_->requires_grad) {
        Tensor& g = b_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a_->value[i];
      }
    };
  }
  return n;
}

Var vdiv(const Var& a, const Var& b) {
  check_same_shape(a, b, "vdiv");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] / b->value[i];
  Var n = make_node(std::move(out), {a, b});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Var& a_ = self.parents[0];
      Var& b_ = self.parents[1];
      if (a_->requires_grad) {
        Tensor& g = a_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] / b_->value[i];
      }
      if (b_->requires_grad) {
        Tensor& g = b_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) {
          double bv = b_->value[i];
          g[i] -= self.grad[i] * a_->value[i] / (bv * bv);
        }
      }
    };
  }
  return n;
}

Var affine(const Var& x, double s, double shift) {
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = s * x->value[i] + shift;
  Var n = make_node(std::move(out), {x});
  if (n->requires_grad) {
    n->backprop = [s](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
    };
  }
  return n;
}

Var scale(const Var& x, double s) { return affine(x, s, 0.0); }

Var mul_const(const Var& x, const Tensor& c) {
  SGPSEG_CHECK(x->value.same_shape(c), "mul_const: shape mismatch "
                                           << x->value.shape_str() << " vs "
                                           << c.shape_str());
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * c[i];
  Var n = make_node(std::move(out), {x});
  if (n->requires_grad) {
    Tensor c_copy = c;
    n->backprop = [c_copy](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * c_copy[i];
    };
  }
  return n;
}

Var relu(const Var& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  constexpr double kCubic = 0.044715;
  return unary_elementwise(
      x,
      [](double v) {
        double t = std::tanh(kSqrt2OverPi * (v + kCubic * v * v * v));
        return 0.5 * v * (1.0 + t);
      },
      [](double v, double) {
        double inner = kSqrt2OverPi * (v + kCubic * v * v * v);
        double t = std::tanh(inner);
        double dinner = kSqrt2OverPi * (1.0 + 3.0 * kCubic * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner;
      });
}

Var sigmoid(const Var& x) {
  return unary_elementwise(
      x,
      [](double v) {
        if (v >= 0.0) {
          return 1.0 / (1.0 + std::exp(-v));
        }
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(const Var& x) {
  return unary_elementwise(x, [](double v) { return std::tanh(v); },
                           [](double, double y) { return 1.0 - y * y; });
}

Var log_op(const Var& x) {
  return unary_elementwise(x, [](double v) { return std::log(v); },
                           [](double v, double) { return 1.0 / v; });
}

Var pow_const(const Var& x, double e) {
  if (e == 0.0) {
    return unary_elementwise(x, [](double) { return 1.0; },
                             [](double, double) { return 0.0; });
  }
  return unary_elementwise(x, [e](double v) { return std::pow(v, e); },
                           [e](double v, double) { return e * std::pow(v, e - 1.0); });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary_elementwise(
      x, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out(shape);
  SGPSEG_CHECK(out.numel() == x->value.numel(),
               "reshape: numel mismatch " << x->value.shape_str() << " -> "
                                          << out.shape_str());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i];
  Var n = make_node(std::move(out), {x});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    };
  }
  return n;
}

Var slice_cols(const Var& x, int c0, int c1) {
  SGPSEG_CHECK(x->value.ndim() == 2, "slice_cols expects a 2D tensor");
  const int rows = x->value.extent(0);
  const int cols = x->value.extent(1);
  SGPSEG_CHECK(0 <= c0 && c0 < c1 && c1 <= cols,
               "slice_cols: bad range [" << c0 << "," << c1 << ") for " << cols
                                         << " columns");
  Tensor out({rows, c1 - c0});
  for (int r = 0; r < rows; ++r) {
    for (int c = c0; c < c1; ++c) out.at2(r, c - c0) = x->value.at2(r, c);
  }
  Var n = make_node(std::move(out), {x});
  if (n->requires_grad) {
    n->backprop = [c0](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      const int rows = self.value.extent(0);
      const int w = self.value.extent(1);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < w; ++c) g.at2(r, c0 + c) += self.grad.at2(r, c);
      }
    };
  }
  return n;
}

Var concat_cols(const std::vector<Var>& parts) {
  SGPSEG_CHECK(!parts.empty(), "concat_cols: no parts");
  const int rows = parts[0]->value.extent(0);
  int total = 0;
  for (const Var& p : parts) {
    SGPSEG_CHECK(p->value.ndim() == 2 && p->value.extent(0) == rows,
                 "concat_cols: all parts must be 2D with equal row count");
    total += p->value.extent(1);
  }
  Tensor out({rows, total});
  int off = 0;
  for (const Var& p : parts) {
    const int w = p->value.extent(1);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < w; ++c) out.at2(r, off + c) = p->value.at2(r, c);
    }
    off += w;
  }
  Var n = make_node(std::move(out), parts);
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      const int rows = self.value.extent(0);
      int off = 0;
      for (Var& p : self.parents) {
        const int w = p->value.extent(1);
        if (p->requires_grad) {
          Tensor& g = p->ensure_grad();
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < w; ++c) g.at2(r, c) += self.grad.at2(r, off + c);
          }
        }
        off += w;
      }
    };
  }
  return n;
}

Var sum(const Var& x) {
  Tensor out = Tensor::scalar(tensor_sum(x->value));
  Var n = make_node(std::move(out), {x});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      double gv = self.grad[0];
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += gv;
    };
  }
  return n;
}

Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x->value.numel());
  return scale(sum(x), inv);
}

Var axis_mean(const Var& x, int axis) {
  SGPSEG_CHECK(x->value.ndim() == 4, "axis_mean expects a 4D tensor");
  SGPSEG_CHECK(0 <= axis && axis < 4, "axis_mean: axis " << axis << " out of range");
  const auto& sh = x->value.shape();
  const int len = sh[static_cast<size_t>(axis)];
  const double inv = 1.0 / (static_cast<double>(x->value.numel()) / len);
  Tensor out({len});
  // Strides of a row-major (H,W,D,C) tensor.
  int64_t strides[4];
  strides[3] = 1;
  strides[2] = sh[3];
  strides[1] = static_cast<int64_t>(sh[2]) * sh[3];
  strides[0] = static_cast<int64_t>(sh[1]) * sh[2] * sh[3];
  const int64_t n = x->value.numel();
  const int64_t stride = strides[axis];
  const int extent = len;
  for (int64_t i = 0; i < n; ++i) {
    int pos = static_cast<int>((i / stride) % extent);
    out[pos] += x->value[i];
  }
  for (int p = 0; p < len; ++p) out[p] *= inv;
  Var node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [stride, extent, inv](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      const int64_t n = g.numel();
      for (int64_t i = 0; i < n; ++i) {
        int pos = static_cast<int>((i / stride) % extent);
        g[i] += self.grad[pos] * inv;
      }
    };
  }
  return node;
}

Var add_rowvec(const Var& x, const Var& v) {
  SGPSEG_CHECK(x->value.ndim() == 2 && v->value.ndim() == 1 &&
                   x->value.extent(1) == v->value.extent(0),
               "add_rowvec: incompatible shapes " << x->value.shape_str() << " and "
                                                  << v->value.shape_str());
  const int rows = x->value.extent(0);
  const int cols = x->value.extent(1);
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out.at2(r, c) = x->value.at2(r, c) + v->value[c];
  }
  Var n = make_node(std::move(out), {x, v});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Var& x_ = self.parents[0];
      Var& v_ = self.parents[1];
      const int rows = self.value.extent(0);
      const int cols = self.value.extent(1);
      if (x_->requires_grad) {
        Tensor& g = x_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
      }
      if (v_->requires_grad) {
        Tensor& g = v_->ensure_grad();
        for (int c = 0; c < cols; ++c) {
          double s = 0.0;
          for (int r = 0; r < rows; ++r) s += self.grad.at2(r, c);
          g[c] += s;
        }
      }
    };
  }
  return n;
}

Var dot(const Var& a, const Var& b) {
  SGPSEG_CHECK(a->value.ndim() == 1 && b->value.ndim() == 1 &&
                   a->value.extent(0) == b->value.extent(0),
               "dot: incompatible shapes");
  double s = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i] * b->value[i];
  Var n = make_node(Tensor::scalar(s), {a, b});
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Var& a_ = self.parents[0];
      Var& b_ = self.parents[1];
      double gv = self.grad[0];
      if (a_->requires_grad) {
        Tensor& g = a_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += gv * b_->value[i];
      }
      if (b_->requires_grad) {
        Tensor& g = b_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += gv * a_->value[i];
      }
    };
  }
  return n;
}

Tensor mm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  SGPSEG_CHECK(a.ndim() == 2 && b.ndim() == 2, "mm expects 2D tensors");
  const int m = trans_a ? a.extent(1) : a.extent(0);
  const int k = trans_a ? a.extent(0) : a.extent(1);
  const int kb = trans_b ? b.extent(1) : b.extent(0);
  const int n = trans_b ? b.extent(0) : b.extent(1);
  SGPSEG_CHECK(k == kb, "mm: inner dimension mismatch " << k << " vs " << kb);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) {
        double av = trans_a ? a.at2(p, i) : a.at2(i, p);
        double bv = trans_b ? b.at2(j, p) : b.at2(p, j);
        s += av * bv;
      }
      out.at2(i, j) = s;
    }
  }
  return out;
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  Tensor out = mm(a->value, b->value, trans_a, trans_b);
  Var n = make_node(std::move(out), {a, b});
  if (n->requires_grad) {
    n->backprop = [trans_a, trans_b](Node& self) {
      Var& a_ = self.parents[0];
      Var& b_ = self.parents[1];
      const Tensor& gout = self.grad;
      if (a_->requires_grad) {
        Tensor ga = trans_a ? mm(b_->value, gout, trans_b, true)
                            : mm(gout, b_->value, false, !trans_b);
        Tensor& g = a_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += ga[i];
      }
      if (b_->requires_grad) {
        Tensor gb = trans_b ? mm(gout, a_->value, true, trans_a)
                            : mm(a_->value, gout, !trans_a, false);
        Tensor& g = b_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += gb[i];
      }
    };
  }
  return n;
}

Var linear(const Var& x, const Var& w, const Var& b) {
  return add_rowvec(matmul(x, w), b);
}

Var softmax(const Var& x) {
  SGPSEG_CHECK(x->value.ndim() == 1, "softmax expects a 1D tensor");
  const int n = x->value.extent(0);
  Tensor out({n});
  double mx = x->value[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x->value[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x->value[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
  Var node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      const int n = self.value.extent(0);
      double dotv = 0.0;
      for (int i = 0; i < n; ++i) dotv += self.grad[i] * self.value[i];
      for (int i = 0; i < n; ++i) g[i] += self.value[i] * (self.grad[i] - dotv);
    };
  }
  return node;
}

Var softmax_rows(const Var& x) {
  SGPSEG_CHECK(x->value.ndim() == 2, "softmax_rows expects a 2D tensor");
  const int rows = x->value.extent(0);
  const int cols = x->value.extent(1);
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    double mx = x->value.at2(r, 0);
    for (int c = 1; c < cols; ++c) mx = std::max(mx, x->value.at2(r, c));
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      double e = std::exp(x->value.at2(r, c) - mx);
      out.at2(r, c) = e;
      z += e;
    }
    for (int c = 0; c < cols; ++c) out.at2(r, c) /= z;
  }
  Var node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    node->backprop = [](Node& self) {
      Var& x_ = self.parents[0];
      if (!x_->requires_grad) return;
      Tensor& g = x_->ensure_grad();
      const int rows = self.value.extent(0);
      const int cols = self.value.extent(1);
      for (int r = 0; r < rows; ++r) {
        double dotv = 0.0;
        for (int c = 0; c < cols; ++c) dotv += self.grad.at2(r, c) * self.value.at2(r, c);
        for (int c = 0; c < cols; ++c) {
          g.at2(r, c) += self.value.at2(r, c) * (self.grad.at2(r, c) - dotv);
        }
      }
    };
  }
  return node;
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  SGPSEG_CHECK(x->value.ndim() == 2, "layer_norm expects a 2D tensor");
  const int rows = x->value.extent(0);
  const int cols = x->value.extent(1);
  SGPSEG_CHECK(gamma->value.ndim() == 1 && gamma->value.extent(0) == cols &&
                   beta->value.ndim() == 1 && beta->value.extent(0) == cols,
               "layer_norm: gamma/beta must be 1D of length " << cols);
  Tensor out({rows, cols});
  Tensor xhat({rows, cols});
  Tensor inv_std({rows});
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += x->value.at2(r, c);
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      double d = x->value.at2(r, c) - mu;
      var += d * d;
    }
    var /= cols;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int c = 0; c < cols; ++c) {
      double xh = (x->value.at2(r, c) - mu) * is;
      xhat.at2(r, c) = xh;
      out.at2(r, c) = gamma->value[c] * xh + beta->value[c];
    }
  }
  Var node = make_node(std::move(out), {x, gamma, beta});
  if (node->requires_grad) {
    node->backprop = [xhat, inv_std](Node& self) {
      Var& x_ = self.parents[0];
      Var& gamma_ = self.parents[1];
      Var& beta_ = self.parents[2];
      const int rows = self.value.extent(0);
      const int cols = self.value.extent(1);
      if (beta_->requires_grad) {
        Tensor& g = beta_->ensure_grad();
        for (int c = 0; c < cols; ++c) {
          double s = 0.0;
          for (int r = 0; r < rows; ++r) s += self.grad.at2(r, c);
          g[c] += s;
        }
      }
      if (gamma_->requires_grad) {
        Tensor& g = gamma_->ensure_grad();
        for (int c = 0; c < cols; ++c) {
          double s = 0.0;
          for (int r = 0; r < rows; ++r) s += self.grad.at2(r, c) * xhat.at2(r, c);
          g[c] += s;
        }
      }
      if (x_->requires_grad) {
        Tensor& g = x_->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          double m1 = 0.0;
          double m2 = 0.0;
          for (int c = 0; c < cols; ++c) {
            double dyh = self.grad.at2(r, c) * gamma_->value[c];
            m1 += dyh;
            m2 += dyh * xhat.at2(r, c);
          }
          m1 /= cols;
          m2 /= cols;
          for (int c = 0; c < cols; ++c) {
            double dyh = self.grad.at2(r, c) * gamma_->value[c];
            g.at2(r, c) += (dyh - m1 - xhat.at2(r, c) * m2) * inv_std[r];
          }
        }
      }
    };
  }
  return node;
}

namespace {

struct ConvDims {
  int H, W, D, Ci, kh, kw, kd, Co, Ho, Wo, Do;
};

ConvDims conv_dims(const Tensor& x, const Tensor& k, int stride, int pad) {
  SGPSEG_CHECK(x.ndim() == 4, "conv3d: input must be 4D (h,w,d,c)");
  SGPSEG_CHECK(k.ndim() == 5, "conv3d: kernel must be 5D (kh,kw,kd,ci,co)");
  SGPSEG_CHECK(stride >= 1, "conv3d: stride must be >= 1");
  SGPSEG_CHECK(pad >= 0, "conv3d: pad must be >= 0");
  ConvDims d;
  d.H = x.extent(0);
  d.W = x.extent(1);
  d.D = x.extent(2);
  d.Ci = x.extent(3);
  d.kh = k.extent(0);
  d.kw = k.extent(1);
  d.kd = k.extent(2);
  SGPSEG_CHECK(k.extent(3) == d.Ci, "conv3d: kernel expects "
                                        << k.extent(3) << " input channels, got "
                                        << d.Ci);
  d.Co = k.extent(4);
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
  d.Do = (d.D + 2 * pad - d.kd) / stride + 1;
  SGPSEG_CHECK(d.Ho >= 1 && d.Wo >= 1 && d.Do >= 1,
               "conv3d: kernel larger than padded input");
  return d;
}

}  // namespace

Var conv3d(const Var& x, const Var& k, const Var& bias, int stride, int pad) {
  const ConvDims dm = conv_dims(x->value, k->value, stride, pad);
  if (bias) {
    SGPSEG_CHECK(bias->value.ndim() == 1 && bias->value.extent(0) == dm.Co,
                 "conv3d: bias must be 1D of length " << dm.Co);
  }
  Tensor out({dm.Ho, dm.Wo, dm.Do, dm.Co});
  std::vector<double> acc(static_cast<size_t>(dm.Co));
  for (int oh = 0; oh < dm.Ho; ++oh) {
    for (int ow = 0; ow < dm.Wo; ++ow) {
      for (int od = 0; od < dm.Do; ++od) {
        for (int co = 0; co < dm.Co; ++co) {
          acc[static_cast<size_t>(co)] = bias ? bias->value[co] : 0.0;
        }
        for (int ah = 0; ah < dm.kh; ++ah) {
          int ih = oh * stride + ah - pad;
          if (ih < 0 || ih >= dm.H) continue;
          for (int aw = 0; aw < dm.kw; ++aw) {
            int iw = ow * stride + aw - pad;
            if (iw < 0 || iw >= dm.W) continue;
            for (int ad = 0; ad < dm.kd; ++ad) {
              int id = od * stride + ad - pad;
              if (id < 0 || id >= dm.D) continue;
              const double* xp = x->value.data() + x->value.index4(ih, iw, id, 0);
              const double* kp =
                  k->value.data() +
                  (((static_cast<int64_t>(ah) * dm.kw + aw) * dm.kd + ad) * dm.Ci) * dm.Co;
              for (int ci = 0; ci < dm.Ci; ++ci) {
                double xv = xp[ci];
                const double* kr = kp + static_cast<int64_t>(ci) * dm.Co;
                for (int co = 0; co < dm.Co; ++co) {
                  acc[static_cast<size_t>(co)] += xv * kr[co];
                }
              }
            }
          }
        }
        double* op = out.data() + out.index4(oh, ow, od, 0);
        for (int co = 0; co < dm.Co; ++co) op[co] = acc[static_cast<size_t>(co)];
      }
    }
  }
  std::vector<Var> parents = {x, k};
  if (bias) parents.push_back(bias);
  Var node = make_node(std::move(out), std::move(parents));
  if (node->requires_grad) {
    node->backprop = [stride, pad](Node& self) {
      Var& x_ = self.parents[0];
      Var& k_ = self.parents[1];
      Var bias_ = self.parents.size() > 2 ? self.parents[2] : nullptr;
      const ConvDims dm = conv_dims(x_->value, k_->value, stride, pad);
      const Tensor& gout = self.grad;
      if (x_->requires_grad) {
        Tensor& gx = x_->ensure_grad();
        for (int ih = 0; ih < dm.H; ++ih) {
          for (int iw = 0; iw < dm.W; ++iw) {
            for (int id = 0; id < dm.D; ++id) {
              double* gxp = gx.data() + gx.index4(ih, iw, id, 0);
              for (int ah = 0; ah < dm.kh; ++ah) {
                int num = ih + pad - ah;
                if (num < 0 || num % stride) continue;
                int oh = num / stride;
                if (oh >= dm.Ho) continue;
                for (int aw = 0; aw < dm.kw; ++aw) {
                  int numw = iw + pad - aw;
                  if (numw < 0 || numw % stride) continue;
                  int ow = numw / stride;
                  if (ow >= dm.Wo) continue;
                  for (int ad = 0; ad < dm.kd; ++ad) {
                    int numd = id + pad - ad;
                    if (numd < 0 || numd % stride) continue;
                    int od = numd / stride;
                    if (od >= dm.Do) continue;
                    const double* gp = gout.data() + gout.index4(oh, ow, od, 0);
                    const double* kp =
                        k_->value.data() +
                        (((static_cast<int64_t>(ah) * dm.kw + aw) * dm.kd + ad) * dm.Ci) *
                            dm.Co;
                    for (int ci = 0; ci < dm.Ci; ++ci) {
                      const double* kr = kp + static_cast<int64_t>(ci) * dm.Co;
                      double s = 0.0;
                      for (int co = 0; co < dm.Co; ++co) s += gp[co] * kr[co];
                      gxp[ci] += s;
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (k_->requires_grad) {
        Tensor& gk = k_->ensure_grad();
        for (int ah = 0; ah < dm.kh; ++ah) {
          for (int aw = 0; aw < dm.kw; ++aw) {
            for (int ad = 0; ad < dm.kd; ++ad) {
              double* gkp = gk.data() +
                            (((static_cast<int64_t>(ah) * dm.kw + aw) * dm.kd + ad) *
                             dm.Ci) *
                                dm.Co;
              for (int oh = 0; oh < dm.Ho; ++oh) {
                int ih = oh * stride + ah - pad;
                if (ih < 0 || ih >= dm.H) continue;
                for (int ow = 0; ow < dm.Wo; ++ow) {
                  int iw = ow * stride + aw - pad;
                  if (iw < 0 || iw >= dm.W) continue;
                  for (int od = 0; od < dm.Do; ++od) {
                    int id = od * stride + ad - pad;
                    if (id < 0 || id >= dm.D) continue;
                    const double* xp = x_->value.data() + x_->value.index4(ih, iw, id, 0);
                    const double* gp = gout.data() + gout.index4(oh, ow, od, 0);
                    for (int ci = 0; ci < dm.Ci; ++ci) {
                      double xv = xp[ci];
                      double* gkr = gkp + static_cast<int64_t>(ci) * dm.Co;
                      for (int co = 0; co < dm.Co; ++co) gkr[co] += xv * gp[co];
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (bias_ && bias_->requires_grad) {
        Tensor& gb = bias_->ensure_grad();
        const int64_t voxels = static_cast<int64_t>(dm.Ho) * dm.Wo * dm.Do;
        for (int co = 0; co < dm.Co; ++co) {
          double s = 0.0;
          for (int64_t v = 0; v < voxels; ++v) s += gout[v * dm.Co + co];
          gb[co] += s;
        }
      }
    };
  }
  return node;
}

Var conv_transpose3d_k2s2(const Var& x, const Var& k, const Var& bias) {
  SGPSEG_CHECK(x->value.ndim() == 4, "conv_transpose3d: input must be 4D");
  SGPSEG_CHECK(k->value.ndim() == 5 && k->value.extent(0) == 2 &&
                   k->value.extent(1) == 2 && k->value.extent(2) == 2,
               "conv_transpose3d: kernel must be (2,2,2,ci,co)");
  const int H = x->value.extent(0);
  const int W = x->value.extent(1);
  const int D = x->value.extent(2);
  const int Ci = x->value.extent(3);
  SGPSEG_CHECK(k->value.extent(3) == Ci, "conv_transpose3d: channel mismatch");
  const int Co = k->value.extent(4);
  if (bias) {
    SGPSEG_CHECK(bias->value.ndim() == 1 && bias->value.extent(0) == Co,
                 "conv_transpose3d: bias must be 1D of length " << Co);
  }
  Tensor out({2 * H, 2 * W, 2 * D, Co});
  for (int oh = 0; oh < 2 * H; ++oh) {
    for (int ow = 0; ow < 2 * W; ++ow) {
      for (int od = 0; od < 2 * D; ++od) {
        const double* xp = x->value.data() + x->value.index4(oh / 2, ow / 2, od / 2, 0);
        const double* kp =
            k->value.data() +
            (((static_cast<int64_t>(oh & 1) * 2 + (ow & 1)) * 2 + (od & 1)) * Ci) * Co;
        double* op = out.data() + out.index4(oh, ow, od, 0);
        for (int co = 0; co < Co; ++co) op[co] = bias ? bias->value[co] : 0.0;
        for (int ci = 0; ci < Ci; ++ci) {
          double xv = xp[ci];
          const double* kr = kp + static_cast<int64_t>(ci) * Co;
          for (int co = 0; co < Co; ++co) op[co] += xv * kr[co];
        }
      }
    }
  }
  std::vector<Var> parents = {x, k};
  if (bias) parents.push_back(bias);
  Var node = make_node(std::move(out), std::move(parents));
  if (node->requires_grad) {
    node->backprop = [](Node& self) {
      Var& x_ = self.parents[0];
      Var& k_ = self.parents[1];
      Var bias_ = self.parents.size() > 2 ? self.parents[2] : nullptr;
      const int H = x_->value.extent(0);
      const int W = x_->value.extent(1);
      const int D = x_->value.extent(2);
      const int Ci = x_->value.extent(3);
      const int Co = k_->value.extent(4);
      const Tensor& gout = self.grad;
      if (x_->requires_grad) {
        Tensor& gx = x_->ensure_grad();
        for (int ih = 0; ih < H; ++ih) {
          for (int iw = 0; iw < W; ++iw) {
            for (int id = 0; id < D; ++id) {
              double* gxp = gx.data() + gx.index4(ih, iw, id, 0);
              for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                  for (int c = 0; c < 2; ++c) {
                    const double* gp =
                        gout.data() + gout.index4(2 * ih + a, 2 * iw + b, 2 * id + c, 0);
                    const double* kp =
                        k_->value.data() +
                        (((static_cast<int64_t>(a) * 2 + b) * 2 + c) * Ci) * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                      const double* kr = kp + static_cast<int64_t>(ci) * Co;
                      double s = 0.0;
                      for (int co = 0; co < Co; ++co) s += gp[co] * kr[co];
                      gxp[ci] += s;
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (k_->requires_grad) {
        Tensor& gk = k_->ensure_grad();
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            for (int c = 0; c < 2; ++c) {
              double* gkp = gk.data() +
                            (((static_cast<int64_t>(a) * 2 + b) * 2 + c) * Ci) * Co;
              for (int ih = 0; ih < H; ++ih) {
                for (int iw = 0; iw < W; ++iw) {
                  for (int id = 0; id < D; ++id) {
                    const double* xp = x_->value.data() + x_->value.index4(ih, iw, id, 0);
                    const double* gp =
                        gout.data() + gout.index4(2 * ih + a, 2 * iw + b, 2 * id + c, 0);
                    for (int ci = 0; ci < Ci; ++ci) {
                      double xv = xp[ci];
                      double* gkr = gkp + static_cast<int64_t>(ci) * Co;
                      for (int co = 0; co < Co; ++co) gkr[co] += xv * gp[co];
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (bias_ && bias_->requires_grad) {
        Tensor& gb = bias_->ensure_grad();
        const int64_t voxels = static_cast<int64_t>(2 * H) * (2 * W) * (2 * D);
        for (int co = 0; co < Co; ++co) {
          double s = 0.0;
          for (int64_t v = 0; v < voxels; ++v) s += gout[v * Co + co];
          gb[co] += s;
        }
      }
    };
  }
  return node;
}

namespace {

Var blend_impl(const Var& base, const Var& enhanced, const Var& gate, bool hard_forward) {
  SGPSEG_CHECK(base->value.same_shape(enhanced->value),
               "blend: shape mismatch " << base->value.shape_str() << " vs "
                                        << enhanced->value.shape_str());
  SGPSEG_CHECK(gate->value.numel() == 1, "blend: gate must be a scalar");
  const double soft = gate->value[0];
  const double g = hard_forward ? (soft > 0.5 ? 1.0 : 0.0) : soft;
  Tensor out(base->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    out[i] = g * enhanced->value[i] + (1.0 - g) * base->value[i];
  }
  Var node = make_node(std::move(out), {base, enhanced, gate});
  if (node->requires_grad) {
    // Backward always uses the soft gate; with hard_forward this is the
    // straight-through estimator.
    node->backprop = [](Node& self) {
      Var& base_ = self.parents[0];
      Var& enh_ = self.parents[1];
      Var& gate_ = self.parents[2];
      const double soft = gate_->value[0];
      if (base_->requires_grad) {
        Tensor& g = base_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += (1.0 - soft) * self.grad[i];
      }
      if (enh_->requires_grad) {
        Tensor& g = enh_->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += soft * self.grad[i];
      }
      if (gate_->requires_grad) {
        Tensor& g = gate_->ensure_grad();
        double s = 0.0;
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
          s += self.grad[i] * (enh_->value[i] - base_->value[i]);
        }
        g[0] += s;
      }
    };
  }
  return node;
}

}  // namespace

Var blend(const Var& base, const Var& enhanced, const Var& gate) {
  return blend_impl(base, enhanced, gate, false);
}

Var blend_straight_through(const Var& base, const Var& enhanced, const Var& soft_gate) {
  return blend_impl(base, enhanced, soft_gate, true);
}

void backward(const Var& root) {
  SGPSEG_CHECK(root != nullptr, "backward: null root");
  SGPSEG_CHECK(root->value.numel() == 1, "backward: root must be a scalar, got shape "
                                             << root->value.shape_str());
  if (!root->requires_grad) return;
  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

}  // namespace sgpseg::ag
