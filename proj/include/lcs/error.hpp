#pragma once

#include <stdexcept>
#include <string>

namespace lcs {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or kernel dimensions do not fit together.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Weights do not match the model configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed bytes: bad magic, truncated record, unsupported pixel format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Checksum mismatch.
class CorruptionError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Numerically unusable input (NaN weights, degenerate samples, empty lists).
class DataError : public Error {
public:
    using Error::Error;
};

/// Kernel pair that the reparameterization algebra cannot merge.
class UnsupportedPatternError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lcs
