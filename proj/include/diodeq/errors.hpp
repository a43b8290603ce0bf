#pragma once

#include <stdexcept>
#include <string>

namespace diodeq {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input structure (wrong CSV header, bad JSON schema, ...).
class SchemaError : public Error {
public:
    using Error::Error;
};

// A cell/token that failed to parse; carries the 1-based data row index.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t row)
        : Error(msg + " (row " + std::to_string(row) + ")"), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

class EmptyDatasetError : public Error {
public:
    using Error::Error;
};

// Invariant violation on otherwise well-formed data (negative intensity, NaN, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Shape/length mismatch between paired arguments.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Degenerate numerical situation: zero variance target, constant feature
// under standard scaling, rank-deficient normal equations, ...
class DegenerateError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public DegenerateError {
public:
    using DegenerateError::DegenerateError;
};

// Iterative solver failed to meet its residual target.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& msg, double at = 0.0)
        : Error(msg), at_(at) {}
    double at() const { return at_; }

private:
    double at_;
};

// Training produced a non-finite loss; carries the epoch index.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, std::size_t epoch)
        : Error(msg + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

// Fock-space norm leak above tolerance; carries the measured leak.
class TruncationError : public Error {
public:
    TruncationError(const std::string& msg, double leak)
        : Error(msg + " (norm leak " + std::to_string(leak) + ")"), leak_(leak) {}
    double leak() const { return leak_; }

private:
    double leak_;
};

// Argument outside an operation's mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

// Analysis window contains no usable structure (no interior minimum,
// no cycles, too few points per segment, ...).
class WindowError : public Error {
public:
    using Error::Error;
};

} // namespace diodeq
