// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double tensor. Everything in this project is desk scale,
// so a single owning container with flat indexing is all we need. Volumes
// are indexed (h, w, d) and feature maps (h, w, d, c), channels last.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgpseg/check.hpp"

namespace sgpseg {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    int64_t n = 1;
    for (int e : shape_) {
      SGPSEG_CHECK(e >= 1, "tensor extent must be >= 1, got " << e);
      n *= e;
    }
    data_.assign(static_cast<size_t>(n), 0.0);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(double v) { return full({1}, v); }

  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    SGPSEG_CHECK(values.size() == t.data_.size(),
                 "value count " << values.size() << " does not match shape numel "
                                << t.data_.size());
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 3D (h, w, d) indexing.
  int64_t index3(int h, int w, int d) const {
    return (static_cast<int64_t>(h) * shape_[1] + w) * shape_[2] + d;
  }
  double& at3(int h, int w, int d) { return data_[static_cast<size_t>(index3(h, w, d))]; }
  double at3(int h, int w, int d) const { return data_[static_cast<size_t>(index3(h, w, d))]; }

  // 4D (h, w, d, c) indexing.
  int64_t index4(int h, int w, int d, int c) const {
    return ((static_cast<int64_t>(h) * shape_[1] + w) * shape_[2] + d) * shape_[3] + c;
  }
  double& at4(int h, int w, int d, int c) {
    return data_[static_cast<size_t>(index4(h, w, d, c))];
  }
  double at4(int h, int w, int d, int c) const {
    return data_[static_cast<size_t>(index4(h, w, d, c))];
  }

  // 2D (row, col) indexing.
  int64_t index2(int r, int c) const { return static_cast<int64_t>(r) * shape_[1] + c; }
  double& at2(int r, int c) { return data_[static_cast<size_t>(index2(r, c))]; }
  double at2(int r, int c) const { return data_[static_cast<size_t>(index2(r, c))]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  // Index of the first non-finite entry, or -1 if all entries are finite.
  int64_t first_nonfinite() const;

  bool all_finite() const { return first_nonfinite() < 0; }

  // Unflattens a flat index into per-axis coordinates, e.g. for diagnostics.
  std::vector<int> unflatten(int64_t flat) const;

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Sum, min, max over all entries (sequential, flat index ascending).
double tensor_sum(const Tensor& t);
double tensor_min(const Tensor& t);
double tensor_max(const Tensor& t);
double tensor_mean(const Tensor& t);

// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

// Exact elementwise equality (bitwise for non-NaN data).
bool tensors_equal(const Tensor& a, const Tensor& b);

}  // namespace sgpseg
