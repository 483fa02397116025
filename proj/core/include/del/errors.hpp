#pragma once

#include <stdexcept>
#include <string>

namespace del {

/// Base of every error the library throws. `exit_code()` is the process
/// status the command-line tool reports for it.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Malformed or inconsistent configuration, unknown ids, shape mismatches.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Non-finite values, divergence, degenerate geometry.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Two particles closer than the coincidence threshold.
class GeometryError : public NumericError {
public:
    GeometryError(std::string what, int i, int j)
        : NumericError(std::move(what)), first(i), second(j) {}
    int first;
    int second;
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

} // namespace del
