#include "trv/error.h"

namespace trv {

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::UndeclaredIdentifier: return "UndeclaredIdentifier";
    case ErrorCode::DuplicateDeclaration: return "DuplicateDeclaration";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::AxesMismatch: return "AxesMismatch";
    case ErrorCode::NonSingletonAxis: return "NonSingletonAxis";
    case ErrorCode::UnsupportedOp: return "UnsupportedOp";
    case ErrorCode::RankZero: return "RankZero";
    case ErrorCode::RClassMismatch: return "RClassMismatch";
    case ErrorCode::HintReferencesUnknownIndex: return "HintReferencesUnknownIndex";
    case ErrorCode::ResidualReduction: return "ResidualReduction";
    case ErrorCode::UnsupportedTheory: return "UnsupportedTheory";
    case ErrorCode::SolverSpawnError: return "SolverSpawnError";
    case ErrorCode::ModelParseError: return "ModelParseError";
    case ErrorCode::SamplingExhausted: return "SamplingExhausted";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace trv
