#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An input lies outside the domain of an operation (NaN/Inf entries, etc).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative routine failed to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularityError : public Error {
public:
    using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A rollout or integration produced a non-finite value at `step`.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// Training aborted; `term` names the offending loss term or parameter.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::string term, std::string last_checkpoint = {})
        : Error(what), term_(std::move(term)), last_checkpoint_(std::move(last_checkpoint)) {}
    const std::string& term() const { return term_; }
    const std::string& last_checkpoint() const { return last_checkpoint_; }

private:
    std::string term_;
    std::string last_checkpoint_;
};

/// Serialized artifact does not match what the caller expects.
class ArtifactError : public Error {
public:
    using Error::Error;
};

} // namespace kae
