#pragma once

#include <stdexcept>
#include <string>

namespace cdn {

/// Shape or dimension disagreement between operands.
struct DimError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation (log of a
/// non-positive value, non-positive covariance factor, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// A caller broke an API contract (non-scalar loss, repeated backward,
/// unnormalized probability rows, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Malformed file content: bad magic, version mismatch, truncation.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A stored parameter block does not match the expected architecture.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration; message names the offending field.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dataset level problems: missing files, count mismatches.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training diverged (NaN/Inf loss); message carries iteration and term values.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cdn
