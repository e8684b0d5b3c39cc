#pragma once

#include <stdexcept>
#include <string>

namespace xnn {

// Invalid configuration: bad hyperparameter values, impossible requests (k > p).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Dimension mismatch between model and data.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values encountered during computation. The message names the
// offending term where known.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data: unparseable CSV cells, degenerate responses, empty files.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace xnn
