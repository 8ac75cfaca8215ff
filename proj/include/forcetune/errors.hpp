#pragma once

#include <stdexcept>

namespace forcetune {

// Configuration or input files rejected before any work starts.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Toolpath text that does not match the move-command dialect.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite signal inside the plant/controller loop.
struct SimulationFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gram matrix could not be factorized even after jitter escalation.
struct FittingFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Posterior variance fell below the negativity tolerance.
struct NumericalFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace forcetune
