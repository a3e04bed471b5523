#pragma once

#include <stdexcept>
#include <string>

namespace cqrank {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclass onto a process exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input that could not be parsed (bad JSON, bad line, bad file).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that violates a dataset or contract invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// On-disk binary artifact is not what it claims to be (magic, version,
/// truncation, checksum).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or shape mismatches inside the numeric engine.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Missing key in an embedding store.
class MissingKeyError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Embedding service could not be reached or answered garbage.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Bad command line or config file.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace cqrank
