#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mor {

// Shape/length mismatches and broken layer wiring.
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Out-of-range numeric parameters (sigma <= 0, zero-norm vectors, ...).
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Angles or dimensions outside the domain of a geometric routine.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Inconsistent run configuration (empty sample sets, SRAM too small, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Least-squares fit with zero variance in the regressor.
class DegenerateFit : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller broke an ordering/precondition contract of the runtime.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

} // namespace mor
