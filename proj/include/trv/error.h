#pragma once

#include <stdexcept>
#include <string>

namespace trv {

enum class ErrorCode {
  UndeclaredIdentifier,
  DuplicateDeclaration,
  DomainMismatch,
  AxesMismatch,
  NonSingletonAxis,
  UnsupportedOp,
  RankZero,
  RClassMismatch,
  HintReferencesUnknownIndex,
  ResidualReduction,
  UnsupportedTheory,
  SolverSpawnError,
  ModelParseError,
  SamplingExhausted,
  ParseError,
  IoError,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code), detail_(what) {}
  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace trv
