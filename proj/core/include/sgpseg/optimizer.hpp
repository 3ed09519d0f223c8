// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Adam with bias correction, no weight decay. Parameter order (and the
// gradient vector passed to step) follows ModelParams::visit.

#pragma once

#include <string>
#include <vector>

#include "sgpseg/backbone.hpp"
#include "sgpseg/config.hpp"

namespace sgpseg {

class Adam {
 public:
  Adam(ModelParams& model, const AdamConfig& config, double lr);

  // grads[i] matches the i-th visited parameter tensor.
  void step(const std::vector<Tensor>& grads);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  size_t param_count() const { return params_.size(); }
  const std::vector<std::string>& param_names() const { return names_; }
  const std::vector<Tensor*>& params() const { return params_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::string> names_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamConfig cfg_;
  double lr_;
  int64_t t_ = 0;
};

}  // namespace sgpseg
