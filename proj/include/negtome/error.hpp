#pragma once

#include <stdexcept>
#include <string>

namespace negtome {

// Base class for all library errors. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or rank mismatch between tensors. Message names both shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Row index outside the valid range of a gather or lookup.
class IndexError : public Error {
public:
    using Error::Error;
};

// Invalid run/merge configuration (non-finite alpha, bad window, missing
// reference, unknown JSON key, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed tensor file. Message names the byte offset of the problem.
class FormatError : public Error {
public:
    using Error::Error;
};

// Invalid metric input (too few vectors, all-zero counts, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failure (open/read/write).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace negtome
