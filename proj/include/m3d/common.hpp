// Copyright 2026 The m3d Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace m3d {

using Index = std::int64_t;

/// Bad input, violated precondition or malformed file. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while computing on valid input (divergence, budget exceeded, I/O).
/// Maps to CLI exit code 2.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail_validation(Args&&... args) {
  throw ValidationError(detail::concat(std::forward<Args>(args)...));
}

template <typename... Args>
[[noreturn]] void fail_compute(Args&&... args) {
  throw ComputeError(detail::concat(std::forward<Args>(args)...));
}

#define M3D_REQUIRE(cond, ...)                      \
  do {                                              \
    if (!(cond)) ::m3d::fail_validation(__VA_ARGS__); \
  } while (false)

}  // namespace m3d
