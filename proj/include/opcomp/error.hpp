#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opcomp {

enum class ErrorKind {
  InvalidArgument,
  DegenerateConstraints,
  DegenerateCompression,
  DegenerateBasis,
  InfeasibleLocalization,
  NumericalFailure,
  FitUndefined,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DegenerateConstraints: return "degenerate-constraints";
    case ErrorKind::DegenerateCompression: return "degenerate-compression";
    case ErrorKind::DegenerateBasis: return "degenerate-basis";
    case ErrorKind::InfeasibleLocalization: return "infeasible-localization";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::FitUndefined: return "fit-undefined";
  }
  return "unknown";
}

/// Library error; `kind()` identifies the failure class for callers that
/// recover (e.g. studies record infeasible cells and move on).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, const std::string& message,
                    ErrorKind kind = ErrorKind::InvalidArgument) {
  if (!condition) throw Error(kind, message);
}

}  // namespace opcomp
