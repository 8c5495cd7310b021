#include "asof/error.hpp"

namespace asof {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kChainViolation: return "ChainViolation";
    case ErrorCode::kUnknownStatute: return "UnknownStatute";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kNotYetInForce: return "NotYetInForce";
    case ErrorCode::kNoDateFound: return "NoDateFound";
    case ErrorCode::kTransport: return "Transport";
    case ErrorCode::kAuthRejected: return "AuthRejected";
    case ErrorCode::kCapabilityUnsupported: return "CapabilityUnsupported";
    case ErrorCode::kEmptyResponse: return "EmptyResponse";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kPrecondition: return "PreconditionViolation";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kEmptyIndex: return "EmptyIndex";
    case ErrorCode::kUnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::kExhausted: return "Exhausted";
    case ErrorCode::kNoCandidates: return "NoCandidates";
    case ErrorCode::kRevisionConflict: return "RevisionConflict";
    case ErrorCode::kUnknownPair: return "UnknownPair";
    case ErrorCode::kEmptyReasons: return "EmptyReasons";
    case ErrorCode::kFatalConfig: return "FatalConfig";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kUnparseableScores: return "UnparseableScores";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kUnmatchedRatings: return "UnmatchedRatings";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kBindFailure: return "BindFailure";
    case ErrorCode::kStoreCorruption: return "StoreCorruption";
    case ErrorCode::kMissingFixture: return "MissingFixture";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kIo); ++i) {
    auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace asof
