#pragma once

#include <stdexcept>
#include <string>

namespace printattr {

// Base of everything the library throws on a contract violation.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor / image extents that do not fit the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Image with no usable contrast where one is required (e.g. uniform dark frame).
class DegenerateImageError : public Error {
public:
    using Error::Error;
};

// Too few documents / samples to build the requested split.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

// Batch-norm in train mode with a single sample.
class DegenerateBatchError : public Error {
public:
    using Error::Error;
};

// NaN/Inf showed up in gradients or loss.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Malformed configuration (page spec, profiles, CLI options).
class ConfigError : public Error {
public:
    using Error::Error;
};

// File format / filesystem problems.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace printattr
