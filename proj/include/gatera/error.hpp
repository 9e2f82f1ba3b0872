#pragma once

#include <stdexcept>

namespace gatera {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or rank disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Pointwise math outside an op's domain (log of a non-positive value, ...).
struct DomainError : Error {
    using Error::Error;
};

// Caller broke an API precondition.
struct ContractError : Error {
    using Error::Error;
};

// Invalid model/experiment wiring; raised at construction, never mid-forward.
struct ConfigError : Error {
    using Error::Error;
};

// Bad runtime input (token id out of range, ...).
struct InputError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace gatera
