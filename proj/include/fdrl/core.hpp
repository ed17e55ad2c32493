#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fdrl {

/// Row-major so that one row is one particle / one sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// All randomness flows through explicitly passed engines of this type.
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or precondition violation by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (bad pairing, bad key, violated invariant).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what,
                            std::optional<std::size_t> index = std::nullopt,
                            std::optional<std::size_t> step = std::nullopt,
                            std::vector<double> history = {})
        : Error(what), index_(index), step_(step), history_(std::move(history)) {}

    /// Offending element (parameter index, particle index, ...), when known.
    [[nodiscard]] std::optional<std::size_t> index() const noexcept { return index_; }
    /// Iteration at which the failure happened (flow step or training step).
    [[nodiscard]] std::optional<std::size_t> step() const noexcept { return step_; }
    /// Recent loss values leading up to a training failure.
    [[nodiscard]] const std::vector<double>& history() const noexcept { return history_; }

private:
    std::optional<std::size_t> index_;
    std::optional<std::size_t> step_;
    std::vector<double> history_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

/// Fills a matrix with i.i.d. standard normals in row-major (particle-major) order.
inline void fill_standard_normal(Matrix& out, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    double* data = out.data();
    for (Index i = 0; i < out.size(); ++i) data[i] = normal(rng);
}

inline Matrix standard_normal(Index rows, Index cols, Rng& rng) {
    Matrix out(rows, cols);
    fill_standard_normal(out, rng);
    return out;
}

/// Index of the first row containing a non-finite entry, if any.
inline std::optional<Index> first_nonfinite_row(const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i)
        if (!m.row(i).allFinite()) return i;
    return std::nullopt;
}

inline Vector column_mean(const Matrix& m) {
    require(m.rows() > 0, "column_mean: empty matrix");
    return m.colwise().mean().transpose();
}

}  // namespace fdrl
