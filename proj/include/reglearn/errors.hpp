#pragma once

#include <stdexcept>

namespace reglearn {

/// Shape or size mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A conductivity coefficient lost positivity, so the diffusion form is no
/// longer elliptic and the discrete systems stop being SPD.
struct EllipticityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A line search exhausted its trial budget without a strict decrease.
struct StagnationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values, or a linear system that is singular where it must not be.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Synthetic data generation could not complete.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace reglearn
