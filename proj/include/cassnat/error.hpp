// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cassnat {

// Base class for all library errors. The CLI maps subclasses to exit codes:
// usage -> 1, data/format -> 2, numeric -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between operands. Message reports both shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid scalar parameter (eps <= 0, bad kernel width, ...).
struct ParameterError : Error {
    using Error::Error;
};

// API misuse (non-scalar loss, blank inside a label sequence, ...).
struct UsageError : Error {
    using Error::Error;
};

// Label sequence cannot be aligned to the available frames.
struct InfeasibleError : Error {
    using Error::Error;
};

// Inconsistent model or run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Invalid attention mask (fully masked query row, bad extents).
struct MaskError : Error {
    using Error::Error;
};

// Checkpoint load/save problems; names the offending parameter when known.
struct CheckpointError : Error {
    using Error::Error;
};

// Malformed file content; message carries the byte offset when known.
struct FormatError : Error {
    using Error::Error;
};

// Non-finite value produced by an operation.
struct NumericError : Error {
    using Error::Error;
};

// Degenerate input to an analysis routine (zero-norm vector, rank-0 data).
struct DegenerateError : Error {
    using Error::Error;
};

// Alignment collapsed to zero tokens where at least one is required.
struct EmptyAlignmentError : Error {
    using Error::Error;
};

}  // namespace cassnat
