#pragma once

#include <stdexcept>
#include <string>

namespace gembed {

// Error classes map onto the CLI exit codes: config=2, data=3, numerical=4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

}  // namespace gembed
