#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace fundmm {

// Input or configuration problem detected before any compute. The CLI maps
// these to exit code 2.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Failure during compute (non-convergence, NaN, ledger mismatch). Exit code 1.
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateSeries : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class ConfigError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

// Carries the file position of a malformed record.
class ParseError : public InvalidInput {
public:
    ParseError(std::string file, std::size_t line, const std::string& what)
        : InvalidInput(file + ":" + std::to_string(line) + ": " + what),
          file_(std::move(file)), line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

// Explicit-step monotonicity bound violated. `bound()` is the largest admissible dt.
class CflViolation : public InvalidInput {
public:
    CflViolation(double requested_dt, double max_dt)
        : InvalidInput(message(requested_dt, max_dt)), requested_(requested_dt), bound_(max_dt) {}

    double requested_dt() const noexcept { return requested_; }
    double bound() const noexcept { return bound_; }

private:
    static std::string message(double dt, double bound) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "CFL violation: dt=%.17g h exceeds max admissible dt=%.17g h", dt, bound);
        return buf;
    }
    double requested_;
    double bound_;
};

}  // namespace fundmm
