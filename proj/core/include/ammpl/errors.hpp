#pragma once

#include <stdexcept>
#include <string>

namespace ammpl {

// Every failure raised by the library derives from Error so callers can
// catch the whole family in one place (the CLI does).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for the named operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain (log of non-positive, divide by zero).
class DomainError : public Error {
public:
    using Error::Error;
};

// Caller broke a precondition (non-scalar loss, unclamped probability, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Bad user-facing argument (empty label, invalid fraction, too few items).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Binary or text file does not match the expected layout.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ammpl
