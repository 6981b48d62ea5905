#pragma once

#include <stdexcept>
#include <string>

namespace fedload {

// Dimension / length mismatches in tensor and layer math.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parameter-tree layout mismatches (paths, shapes, flat lengths).
struct LayoutError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values; message names the offending field.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input files; message carries the line number where known.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Traces that cannot be placed on a common time grid.
struct AlignmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fedload
