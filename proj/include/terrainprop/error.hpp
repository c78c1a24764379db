#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace terrainprop {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Covariance factorization failed even after diagonal jitter.
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Statistics requested from degenerate (e.g. constant) data.
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Diagonal of the forward-scattering system too small to divide by.
class SingularDiagonalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Observation point too close to a surface match point for the kernel sum.
class NearSingularError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed dataset or weight file. Carries the byte offset where parsing stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    [[nodiscard]] std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Weight graph inconsistent with its manifest or the expected architecture.
class ModelError : public std::runtime_error {
public:
    ModelError(const std::string& layer, const std::string& what)
        : std::runtime_error("layer '" + layer + "': " + what), layer_(layer) {}

    [[nodiscard]] const std::string& layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

}  // namespace terrainprop
