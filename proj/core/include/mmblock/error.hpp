#pragma once

#include <stdexcept>
#include <string>

namespace mmb {

/// Shapes, modes or extents that do not fit together.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite input, singular systems with no usable direction, etc.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration, hierarchy or file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mmb
