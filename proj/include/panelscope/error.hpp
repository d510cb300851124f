#pragma once

#include <stdexcept>
#include <string>

namespace panelscope {

// Base of every error thrown by the toolkit. The CLI maps each subclass to a
// distinct exit code; the HTTP service maps them to status codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input record. `where` is usually "file:line".
class ParseError : public Error {
public:
    ParseError(const std::string& where, const std::string& what)
        : Error(where + ": " + what) {}
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

// Statistic is undefined for the given input (e.g. kappa with p_e == 1).
class DegenerateError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

// Raised when an interactive feedback session is abandoned before completion.
class AbortedError : public Error {
public:
    using Error::Error;
};

}  // namespace panelscope
