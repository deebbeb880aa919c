#pragma once

#include <stdexcept>
#include <string>

namespace sdetree {

/// Bad arguments or unsupported requests (wrong enum tag, zero dimension, ...).
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Mismatched shapes: wrong level, wrong field size, incompatible dimensions.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values produced during evaluation; message names (k, node).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Singular or numerically unsolvable linear system.
struct SolvabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A generator or solver failed its own exit check; never a caller mistake.
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace sdetree
