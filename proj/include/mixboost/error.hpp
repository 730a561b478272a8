#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mixboost {

/// Invalid argument or parameter outside its mathematical domain.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A score or density left the representable range (e.g. LogS of a zero density).
class ScoreOverflow : public std::runtime_error {
public:
    explicit ScoreOverflow(const std::string& what, std::ptrdiff_t row = -1)
        : std::runtime_error(what), row_(row) {}
    /// Offending data row, or -1 when not tied to a row.
    [[nodiscard]] std::ptrdiff_t row() const noexcept { return row_; }

private:
    std::ptrdiff_t row_;
};

/// Optimizer or boosting run could not proceed.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::size_t iterations, double gradient_norm)
        : std::runtime_error(what), iterations_(iterations), gradient_norm_(gradient_norm) {}
    [[nodiscard]] std::size_t iterations() const noexcept { return iterations_; }
    [[nodiscard]] double gradient_norm() const noexcept { return gradient_norm_; }

private:
    std::size_t iterations_;
    double gradient_norm_;
};

/// Malformed or inconsistent input data (files, schemas, missing covariates).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mixboost
