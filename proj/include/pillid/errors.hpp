#pragma once

#include <stdexcept>
#include <string>

namespace pillid {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad numeric input: zero-norm rows, non-finite values, dimension mismatches.
struct DegenerateInputError : Error {
    using Error::Error;
};

// A persisted artifact failed validation (bad magic, truncated payload, ...).
struct CorruptArtifactError : Error {
    using Error::Error;
};

// Invalid run configuration or CLI usage.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem failure that is not a corruption signal (missing file, no permission).
struct IoError : Error {
    using Error::Error;
};

} // namespace pillid
