#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace bsdectl {

enum class ErrorCode {
  kDimensionMismatch,
  kNoiseMomentViolation,
  kUnsupportedReducedStructure,
  kSchemaError,
  kRankDeficient,
  kBadUserM,
  kSingularPencil,
  kEnumerationTooLarge,
  kCriteriaDisagreement,
  kStageMismatch,
  kAdaptednessViolation,
  kSingularGramian,
  kTargetNotInS,
  kNoIntertwiner,
  kStructureUnsupported,
  kSingularBlock,
  kSingularPBracket,
  kMalformedControllerTable,
  kInvalidArgument,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNoiseMomentViolation: return "NoiseMomentViolation";
    case ErrorCode::kUnsupportedReducedStructure: return "UnsupportedReducedStructure";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kBadUserM: return "BadUserM";
    case ErrorCode::kSingularPencil: return "SingularPencil";
    case ErrorCode::kEnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::kCriteriaDisagreement: return "CriteriaDisagreement";
    case ErrorCode::kStageMismatch: return "StageMismatch";
    case ErrorCode::kAdaptednessViolation: return "AdaptednessViolation";
    case ErrorCode::kSingularGramian: return "SingularGramian";
    case ErrorCode::kTargetNotInS: return "TargetNotInS";
    case ErrorCode::kNoIntertwiner: return "NoIntertwiner";
    case ErrorCode::kStructureUnsupported: return "StructureUnsupported";
    case ErrorCode::kSingularBlock: return "SingularBlock";
    case ErrorCode::kSingularPBracket: return "SingularPBracket";
    case ErrorCode::kMalformedControllerTable: return "MalformedControllerTable";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

/// Every failure raised by the library carries one of the codes above; the
/// CLI maps codes onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Instance-file error. `line` is 0 when the problem is not tied to a
/// position in the text (e.g. a missing field).
class SchemaError : public Error {
 public:
  SchemaError(std::string field, int line, const std::string& message)
      : Error(ErrorCode::kSchemaError, Describe(field, line, message)),
        field_(std::move(field)),
        line_(line) {}

  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  static std::string Describe(const std::string& field, int line,
                              const std::string& message) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + message;
  }

  std::string field_;
  int line_;
};

class SingularPBracketError : public Error {
 public:
  SingularPBracketError(int index, const std::string& message)
      : Error(ErrorCode::kSingularPBracket,
              "P(" + std::to_string(index) + "): " + message),
        index_(index) {}

  int index() const noexcept { return index_; }

 private:
  int index_;
};

}  // namespace bsdectl
