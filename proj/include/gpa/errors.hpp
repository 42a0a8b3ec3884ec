#pragma once

#include <stdexcept>
#include <string>

namespace gpa {

// Shape or argument mismatch detected before any computation.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or unusable input data (CSV rows, file formats, configs).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure during optimization (NaN loss, diverged training).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace gpa
