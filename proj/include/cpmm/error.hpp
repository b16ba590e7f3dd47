#pragma once

#include <stdexcept>
#include <string>

namespace cpmm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or type invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Operand shapes disagree (quality vectors, contexts, registries).
class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Wire-format or text-grammar failure. `where` names the header or field.
class ParseError : public Error {
public:
    ParseError(std::string where, const std::string& what)
        : Error(where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

/// Illegal state-machine transition; the object is left unchanged.
class StateError : public Error {
public:
    using Error::Error;
};

/// No feasible solution exists (auction cover, equilibrium oracle).
class InfeasibleError : public Error {
public:
    using Error::Error;
};

}  // namespace cpmm
