#pragma once

#include <stdexcept>
#include <string>

namespace stg2seq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree with what an operation requires.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed or insufficient input data (files, series, sizes).
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid hyperparameters or configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced where finite values are required, or divergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar or twice on one tape.
class ContractError : public Error {
public:
    using Error::Error;
};

}  // namespace stg2seq
