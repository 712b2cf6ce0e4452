#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace camo {

enum class ErrorCode {
  kDimensionTooSmall,
  kDimensionMismatch,
  kInvalidArgument,
  kInsufficientSupport,
  kDegenerateConfiguration,
  kPointAtInfinity,
  kNonInvertible,
  kZeroTotalWeight,
  kNoModelFound,
  kBadMagic,
  kTruncatedFile,
  kDimensionOverflow,
  kConfigInvalid,
  kIo,
  kEmptyKeyframes,
  kOutOfFrameBox,
  kLengthMismatch,
  kMissingInput,
  kInternal,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionTooSmall: return "dimension_too_small";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInsufficientSupport: return "insufficient_support";
    case ErrorCode::kDegenerateConfiguration: return "degenerate_configuration";
    case ErrorCode::kPointAtInfinity: return "point_at_infinity";
    case ErrorCode::kNonInvertible: return "non_invertible";
    case ErrorCode::kZeroTotalWeight: return "zero_total_weight";
    case ErrorCode::kNoModelFound: return "no_model_found";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kTruncatedFile: return "truncated_file";
    case ErrorCode::kDimensionOverflow: return "dimension_overflow";
    case ErrorCode::kConfigInvalid: return "config_invalid";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kEmptyKeyframes: return "empty_keyframes";
    case ErrorCode::kOutOfFrameBox: return "out_of_frame_box";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kMissingInput: return "missing_input";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

// Every failure raised by the library. `frame()` is set when the error was
// raised while processing a specific frame or frame pair of a sequence.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<int> frame = std::nullopt)
      : std::runtime_error(message), code_(code), frame_(frame) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<int> frame() const noexcept { return frame_; }

  Error with_frame(int frame) const { return Error(code_, what(), frame); }

 private:
  ErrorCode code_;
  std::optional<int> frame_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void check(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace camo
