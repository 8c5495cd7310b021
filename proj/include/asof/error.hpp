#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace asof {

enum class ErrorCode {
  kMalformedRecord,
  kChainViolation,
  kUnknownStatute,
  kNotFound,
  kNotYetInForce,
  kNoDateFound,
  kTransport,
  kAuthRejected,
  kCapabilityUnsupported,
  kEmptyResponse,
  kDimensionMismatch,
  kPrecondition,
  kZeroVector,
  kEmptyIndex,
  kUnparseableVerdict,
  kExhausted,
  kNoCandidates,
  kRevisionConflict,
  kUnknownPair,
  kEmptyReasons,
  kFatalConfig,
  kTimeout,
  kUnparseableScores,
  kDegenerateInput,
  kUnmatchedRatings,
  kDomainError,
  kBindFailure,
  kStoreCorruption,
  kMissingFixture,
  kIo,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

/// Every failure raised by the engine. The code is stable and is what gets
/// persisted into run records; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace asof
