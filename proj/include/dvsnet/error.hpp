#pragma once

#include <stdexcept>
#include <string>

namespace dvsnet {

/// Malformed or inconsistent input data (files, headers, dataset layout).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed image payload; carries the byte offset where decoding failed.
class DecodeError : public DataError {
public:
    DecodeError(const std::string& what, std::size_t offset)
        : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Argument outside the domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite values or numeric breakdown during simulation or training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shape disagreement.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace dvsnet
