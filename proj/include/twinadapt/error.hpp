#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twinadapt {

enum class ErrorKind {
  DuplicateId,
  InvalidDescriptor,
  UnknownModelId,
  NoSuitableCandidate,
  InvalidConfiguration,
  UnsupportedDepth,
  ParamOutOfBounds,
  AlgebraicLoop,
  NumericalFailure,
  Unreachable,
  Timeout,
  ProtocolError,
  RemoteSimulationError,
  InvalidScenario,
  UnknownParameter,
  WindowMismatch,
  SimulationFailure,
  InvalidRequest,
  ConfigError,
  ActivationConflict,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace twinadapt
