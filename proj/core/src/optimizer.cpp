// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0

#include "sgpseg/optimizer.hpp"

#include <cmath>

namespace sgpseg {

Adam::Adam(ModelParams& model, const AdamConfig& config, double lr)
    : cfg_(config), lr_(lr) {
  model.visit([this](const std::string& name, Tensor& t) {
    names_.push_back(name);
    params_.push_back(&t);
    m_.push_back(Tensor::zeros(t.shape()));
    v_.push_back(Tensor::zeros(t.shape()));
  });
}

void Adam::step(const std::vector<Tensor>& grads) {
  SGPSEG_CHECK(grads.size() == params_.size(),
               "adam: got " << grads.size() << " gradients for " << params_.size()
                            << " parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& theta = *params_[p];
    const Tensor& g = grads[p];
    SGPSEG_CHECK(g.same_shape(theta), "adam: gradient shape " << g.shape_str()
                                                              << " mismatches parameter "
                                                              << names_[p]);
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (int64_t i = 0; i < theta.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      theta[i] -= lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace sgpseg
