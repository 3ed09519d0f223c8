// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Error types and check macros. ValidationError maps to CLI exit code 1,
// NumericalError to exit code 2.

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace sgpseg {

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sgpseg

#define SGPSEG_CHECK(cond, msg)                      \
  do {                                               \
    if (!(cond)) {                                   \
      std::ostringstream oss_;                       \
      oss_ << msg;                                   \
      throw ::sgpseg::ValidationError(oss_.str());   \
    }                                                \
  } while (0)

#define SGPSEG_CHECK_NUM(cond, msg)                  \
  do {                                               \
    if (!(cond)) {                                   \
      std::ostringstream oss_;                       \
      oss_ << msg;                                   \
      throw ::sgpseg::NumericalError(oss_.str());    \
    }                                                \
  } while (0)
