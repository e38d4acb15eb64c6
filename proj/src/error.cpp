// SPDX-License-Identifier: Apache-2.0
#include "fedseq/error.hpp"

namespace fedseq {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::ShapeMismatch: return "shape mismatch";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Degenerate: return "degenerate input";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Protocol: return "protocol error";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::LayoutMismatch: return "layout mismatch";
    case ErrorCode::Internal: return "internal error";
  }
  return "unknown error";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fedseq
