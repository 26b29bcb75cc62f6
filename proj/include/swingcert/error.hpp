#pragma once

#include <stdexcept>
#include <string>

namespace swingcert {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent user input: configs, schedules, flags.
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed to produce a valid result
/// (infeasible equilibrium, non-positive certificate constant, ...).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace swingcert
