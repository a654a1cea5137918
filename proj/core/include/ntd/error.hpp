#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ntd {

enum class ErrorKind {
  kMissingColumn,
  kParseError,
  kDuplicateUnitAge,
  kInconsistentUnit,
  kEmptyCell,
  kDegenerateDenominator,
  kInvalidWindow,
  kMissingGroup,
  kNoDonors,
  kTooFewUnits,
  kDegenerateTrainingSplit,
  kSingularDesign,
  kNonFiniteWeight,
  kCollinearDesign,
  kRankDeficient,
  kWindowMismatch,
  kInvalidSpec,
  kOutOfRange,
  kInvalidArgument,
  kIo,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ntd
