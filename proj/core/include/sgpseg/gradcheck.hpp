// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of analytic gradients. Step 1e-5,
// pass threshold 1e-4 on the relative error
//
//   rel(a, n) = |a - n| / max(|a| + |n|, 1e-5)
//
// The 1e-5 denominator floor keeps finite-difference rounding noise (~1e-10
// absolute at this step size) from dominating near-zero gradients while
// still catching any absolute deviation above 1e-9.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sgpseg/tensor.hpp"

namespace sgpseg {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;

double fd_relative_error(double analytic, double numeric);

struct GradCheckAccumulator {
  double max_rel_err = 0.0;
  int64_t checks = 0;
  std::string worst;

  void add(const std::string& name, int64_t index, double analytic, double numeric);
  bool passed() const { return checks > 0 && max_rel_err < kFdTolerance; }
};

// Central difference of `eval` w.r.t. coordinate `index` of `t`. `eval` must
// recompute the scalar objective from current tensor contents; `t` is
// restored afterwards.
double central_difference(Tensor& t, int64_t index, const std::function<double()>& eval);

struct GradCheckReport {
  std::string component;
  uint64_t seed = 0;
  bool passed = false;
  double max_rel_err = 0.0;
  int64_t checks = 0;
  std::string worst;
  double elapsed_seconds = 0.0;
};

// component: sgpm | msfb | loss | end_to_end. Failures are reported, never
// thrown.
GradCheckReport gradcheck_component(const std::string& component, uint64_t seed);

std::vector<std::string> gradcheck_component_names();

}  // namespace sgpseg
