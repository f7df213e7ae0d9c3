#pragma once

#include <stdexcept>
#include <string>

namespace owd {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteError : std::runtime_error {
    explicit NonFiniteError(const std::string& term)
        : std::runtime_error("non-finite value in " + term), term(term) {}
    std::string term;
};

struct PlacementFailure : std::runtime_error {
    explicit PlacementFailure(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace owd
