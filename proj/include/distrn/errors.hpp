#pragma once

#include <stdexcept>
#include <string>

namespace distrn {

/// Base class for all errors raised by the library. Each subclass carries the
/// process exit code the command-line tool reports for it.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    [[nodiscard]] virtual int exit_code() const noexcept { return 1; }
};

/// Malformed configuration, bad file contents or violated input invariants.
class ConfigError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 2; }
};

/// Numerical failure: non-finite state, non-convergence, undefined ratios.
class NumericError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

/// No noise scale satisfies the privacy calibration inequality.
class CalibrationError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 4; }
};

/// Out-of-order message or missing report in the aggregation protocol.
class ProtocolError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

} // namespace distrn
