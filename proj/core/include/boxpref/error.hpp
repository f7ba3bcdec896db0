#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace boxpref {

enum class ErrorCode {
  kInvalidArgument,
  kDegenerateResult,
  kParseError,
  kSchemaError,
  kReferentialError,
  kIoError,
  kEmptyGroundTruth,
  kNonFiniteInput,
  kNonConvergence,
  kDegenerateTable,
  kUnknownOption,
  kInvalidSelection,
  kDuplicateSubmission,
  kStudyComplete,
  kUnknownStudy,
  kUnknownTask,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library is an Error carrying a code; the
// message names the file and record index where one is known.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace boxpref
