#pragma once

#include <stdexcept>
#include <string>

namespace taskagg {

/// Malformed input: bad schema, ragged CSV, non-finite cell, shape mismatch.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A quantity is mathematically undefined for the given data (e.g. R^2 of a
/// constant target).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace taskagg
