#pragma once

#include <stdexcept>
#include <string>

namespace olearn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes of operands do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A value or option violates its documented domain.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data could not be read or does not satisfy its schema.
class DataError : public Error {
public:
    using Error::Error;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

} // namespace olearn
