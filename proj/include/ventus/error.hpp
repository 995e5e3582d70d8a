#pragma once

#include <stdexcept>
#include <string>

namespace ventus {

// Bad input or configuration. The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A location or coordinate that falls outside the grid.
class OutOfDomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public ValidationError {
public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateKeyError : public ParseError {
public:
    using ParseError::ParseError;
};

class StepError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// GT1 grid tensor format failures, one type per failure kind.
class BadMagicError : public ValidationError {
public:
    using ValidationError::ValidationError;
};
class MissingKeyError : public ValidationError {
public:
    using ValidationError::ValidationError;
};
class PayloadLengthError : public ValidationError {
public:
    using ValidationError::ValidationError;
};
class NonFiniteError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class RankDeficientError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Training diverged (NaN/inf loss). Not a user error: exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ventus
