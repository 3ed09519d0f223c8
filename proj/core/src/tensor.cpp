// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sgpseg {

int64_t Tensor::first_nonfinite() const {
  for (int64_t i = 0; i < numel(); ++i) {
    if (!std::isfinite(data_[static_cast<size_t>(i)])) return i;
  }
  return -1;
}

std::vector<int> Tensor::unflatten(int64_t flat) const {
  std::vector<int> coords(shape_.size(), 0);
  for (int axis = ndim() - 1; axis >= 0; --axis) {
    int e = shape_[static_cast<size_t>(axis)];
    coords[static_cast<size_t>(axis)] = static_cast<int>(flat % e);
    flat /= e;
  }
  return coords;
}

std::string Tensor::shape_str() const {
  std::ostringstream oss;
  oss << "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) oss << ",";
    oss << shape_[i];
  }
  oss << ")";
  return oss.str();
}

double tensor_sum(const Tensor& t) {
  double s = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) s += t[i];
  return s;
}

double tensor_min(const Tensor& t) {
  SGPSEG_CHECK(t.numel() > 0, "tensor_min on empty tensor");
  double m = t[0];
  for (int64_t i = 1; i < t.numel(); ++i) m = std::min(m, t[i]);
  return m;
}

double tensor_max(const Tensor& t) {
  SGPSEG_CHECK(t.numel() > 0, "tensor_max on empty tensor");
  double m = t[0];
  for (int64_t i = 1; i < t.numel(); ++i) m = std::max(m, t[i]);
  return m;
}

double tensor_mean(const Tensor& t) {
  SGPSEG_CHECK(t.numel() > 0, "tensor_mean on empty tensor");
  return tensor_sum(t) / static_cast<double>(t.numel());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  SGPSEG_CHECK(a.same_shape(b), "max_abs_diff: shape mismatch " << a.shape_str()
                                                                << " vs " << b.shape_str());
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace sgpseg
