// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace neurotrails {

/// Failure category. Values double as CLI exit codes.
enum class ErrorCode : int {
  validation = 1,
  divergence = 2,
  io = 3,
  invalid_argument = 4,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(const std::string &what) {
  throw Error(ErrorCode::invalid_argument, what);
}

[[noreturn]] inline void fail_validation(const std::string &what) {
  throw Error(ErrorCode::validation, what);
}

[[noreturn]] inline void fail_io(const std::string &what) {
  throw Error(ErrorCode::io, what);
}

[[noreturn]] inline void fail_divergence(const std::string &what) {
  throw Error(ErrorCode::divergence, what);
}

} // namespace neurotrails
