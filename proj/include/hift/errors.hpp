#pragma once

#include <stdexcept>
#include <string>

namespace hift {

// Error taxonomy used across the library. The CLI maps these to exit codes
// (config -> 2, diverged -> 3, anything else -> 1).

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LookupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResidencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VocabularyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ComparisonError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergedError : std::runtime_error {
    DivergedError(std::size_t step, const std::string& what)
        : std::runtime_error(what), step_index(step) {}
    std::size_t step_index;
};

}  // namespace hift
