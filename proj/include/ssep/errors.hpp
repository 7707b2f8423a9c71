#pragma once

#include <stdexcept>
#include <string>

namespace ssep {

// Invalid input parameters (bad density, non-increasing grid, ...).
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// The ring is too small for the requested horizon: signals could wrap around.
struct GuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A numerical routine failed (non-convergence, singular matrix, leakage).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A field is not numerically compactly supported on its grid.
struct SupportError : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace ssep
