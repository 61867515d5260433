// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ppgnas {

enum class ErrorKind {
  kInvalidArgument,  // bad configuration or argument values
  kShape,            // tensor / layer shape mismatch
  kGeometry,         // convolution or pooling geometry yields no output
  kNumeric,          // NaN/Inf or divergence
  kIo,               // file access and format errors
  kBudget,           // deployment memory budget exceeded
  kState,            // API misuse (e.g. backward twice)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace ppgnas
