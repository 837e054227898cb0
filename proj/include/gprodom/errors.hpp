#pragma once

#include <stdexcept>

namespace gprodom {

/// Precondition violation on caller-supplied data.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Missing or malformed files and streams.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cosine similarity is undefined because an operand is all-zero.
struct UndefinedSimilarity : std::domain_error {
  using std::domain_error::domain_error;
};

/// Solver-level numerical failure.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Singular normal equations; the message names the unconstrained directions.
struct RankDeficiencyError : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace gprodom
