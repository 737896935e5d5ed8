#pragma once

#include <stdexcept>
#include <string>

namespace robult {

/// Operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input lies outside the mathematical domain of an operation (log of a nonpositive value, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A row whose norm is too small to normalize, or a projection with no variance.
class DegenerateInputError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller broke a documented precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A loss or metric became NaN/inf during training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Metric is undefined for the given input (e.g. AUROC with one class).
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace robult
