#pragma once

#include <stdexcept>
#include <string>

namespace dtf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent grid shapes or channel counts between arguments.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Missing, corrupt or out-of-range data (files, manifests, codec limits).
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values encountered during optimization or inference.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A value that violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace dtf
