#pragma once
#include <stdexcept>
#include <string>

namespace subdiff {

// Validation failures (bad specs/config). CLI maps these to exit code 2.
struct SpecError : std::invalid_argument {
    explicit SpecError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Sampled path does not reach the requested level; caller must extend the horizon.
struct HorizonError : std::runtime_error {
    explicit HorizonError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical diagnostics (NaN in coefficients, non-contraction, ...). CLI exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace subdiff
