#include "boxpref/error.hpp"

namespace boxpref {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDegenerateResult: return "DegenerateResult";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kReferentialError: return "ReferentialError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kDegenerateTable: return "DegenerateTable";
    case ErrorCode::kUnknownOption: return "UnknownOption";
    case ErrorCode::kInvalidSelection: return "InvalidSelection";
    case ErrorCode::kDuplicateSubmission: return "DuplicateSubmission";
    case ErrorCode::kStudyComplete: return "StudyComplete";
    case ErrorCode::kUnknownStudy: return "UnknownStudy";
    case ErrorCode::kUnknownTask: return "UnknownTask";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace boxpref
