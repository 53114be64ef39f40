#pragma once

#include <stdexcept>
#include <string>

namespace gnnstab {

// Base of every error raised by the library. Each subclass corresponds to one
// failure category so callers (and the CLI exit-code mapping) can dispatch on type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class DegenerateGraphError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

// ES + SE = Delta has no unique solution because some lambda_i + lambda_j vanishes.
class SingularEquationError : public Error {
public:
    SingularEquationError(std::string what, int i, int j)
        : Error(std::move(what)), first_(i), second_(j) {}

    int first_index() const noexcept { return first_; }
    int second_index() const noexcept { return second_; }

private:
    int first_;
    int second_;
};

// Every candidate relabelling led to a singular relative-error equation.
class NoValidErrorMatrixError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::string what, long line) : Error(std::move(what)), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace gnnstab
