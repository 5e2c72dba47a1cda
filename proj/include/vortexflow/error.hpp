#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vortexflow {

enum class ErrorKind {
  InvalidArgument,
  PoleSingularity,
  CoincidentVortices,
  NearCollision,
  DegreeAssumptionViolated,
  PoleEscape,
  CapAssumptionViolated,
  ResolutionError,
  SeparationError,
  BlowUp,
  UnresolvedCore,
  TrackingLoss,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` identifies
// the failure class so callers (and the CLI exit-code mapping) can branch.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace vortexflow
