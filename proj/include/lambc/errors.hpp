#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lambc {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered, or an arithmetic operation that cannot be performed
// (division by zero). Non-finite values are never propagated silently.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Invalid argument to an operation (bad step size, duplicate layer names, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent configuration; maps to exit code 2 in the CLI.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input file (CSV/IDX); message carries line number or byte offset.
class FormatError : public Error {
public:
    using Error::Error;
};

// Telemetry rows recorded out of order.
class SequenceError : public Error {
public:
    using Error::Error;
};

// A recorded value violates a run invariant (e.g. the clip band).
class InvariantError : public Error {
public:
    using Error::Error;
};

// Filesystem failure, with the offending path in the message.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite weights or loss during training; maps to exit code 3 in the CLI.
class DivergenceError : public Error {
public:
    DivergenceError(std::string layer, std::uint64_t step, const std::string& what)
        : Error(what), layer_(std::move(layer)), step_(step) {}

    const std::string& layer() const noexcept { return layer_; }
    std::uint64_t step() const noexcept { return step_; }

private:
    std::string layer_;
    std::uint64_t step_;
};

}  // namespace lambc
