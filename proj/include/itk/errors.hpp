#pragma once

#include <stdexcept>
#include <string>

namespace itk {

// Thrown when an input violates a documented precondition or invariant.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an operation is called on an object in the wrong state
// (e.g. routing before the EMA has been initialized).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged past the abort threshold.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace itk
