// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fedseq {

enum class ErrorCode {
  InvalidArgument = 1,
  ShapeMismatch,
  NonFinite,
  Degenerate,
  Io,
  Parse,
  Protocol,
  Timeout,
  LayoutMismatch,
  Internal,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure in the library is reported through this exception type; the
/// C API maps the code onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace fedseq
