#pragma once

#include <stdexcept>
#include <string>

namespace pgb {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value violates a domain invariant (non-bijective permutation, negative score, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed or unreadable archive, or any other I/O failure.
class FormatError : public Error {
public:
    using Error::Error;
};

/// The attention phase alone already exceeds the parameter budget.
class BudgetInfeasible : public Error {
public:
    BudgetInfeasible(const std::string& what, double overshoot)
        : Error(what), overshoot_(overshoot) {}

    double overshoot() const noexcept { return overshoot_; }

private:
    double overshoot_;
};

} // namespace pgb
