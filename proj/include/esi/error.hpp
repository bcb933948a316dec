#pragma once

#include <stdexcept>
#include <string>

namespace esi {

// Error categories map one-to-one onto the CLI exit codes:
// ParameterError -> 2, DataError/FormatError/IoError -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// A metric that has no value for the given input (e.g. peak of an all-zero estimate).
class UndefinedResultError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Raised when extended sources cannot be placed without overlap.
class PlacementError : public Error {
public:
    using Error::Error;
};

}  // namespace esi
