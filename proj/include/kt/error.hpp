#pragma once

#include <stdexcept>
#include <string>

namespace kt {

// Bad invocation: unknown flag, missing argument, invalid option value.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files, inconsistent datasets, unreadable archives.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values, shape mismatches and other numeric contract violations.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kt
