#include "vortexflow/error.hpp"

namespace vortexflow {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::PoleSingularity: return "PoleSingularity";
    case ErrorKind::CoincidentVortices: return "CoincidentVortices";
    case ErrorKind::NearCollision: return "NearCollision";
    case ErrorKind::DegreeAssumptionViolated: return "DegreeAssumptionViolated";
    case ErrorKind::PoleEscape: return "PoleEscape";
    case ErrorKind::CapAssumptionViolated: return "CapAssumptionViolated";
    case ErrorKind::ResolutionError: return "ResolutionError";
    case ErrorKind::SeparationError: return "SeparationError";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::UnresolvedCore: return "UnresolvedCore";
    case ErrorKind::TrackingLoss: return "TrackingLoss";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace vortexflow
