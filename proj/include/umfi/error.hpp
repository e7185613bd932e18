#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace umfi {

enum class ErrorCode {
  kMissingColumn,
  kNonNumeric,
  kTooFewRows,
  kNonFinite,
  kIndexOutOfRange,
  kInvalidArgument,
  kIo,
  kEmptyFeatureSet,
  kNoOobRows,
  kLengthMismatch,
  kSubsetBudgetExceeded,
  kOverlappingGroups,
  kTooFewPoints,
  kRangeExceedsFeatures,
};

std::string_view error_code_name(ErrorCode code);

// All recoverable failures in the library surface as this exception type.
class UmfiError : public std::runtime_error {
 public:
  UmfiError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace umfi
