#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace hetgraph {

/// Row-major dense matrix used throughout the numeric code.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;

struct SparseEntry {
    std::size_t row = 0;
    std::size_t col = 0;
    double value = 0.0;

    bool operator==(const SparseEntry&) const = default;
};

/// Coordinate-form real matrix. Entries are kept sorted by (row, col), are
/// unique, finite and in range.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

    /// Validates and sorts `entries`. Duplicate coordinates are an error.
    static SparseMatrix from_entries(std::size_t rows, std::size_t cols, std::vector<SparseEntry> entries);

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t nnz() const { return entries_.size(); }
    [[nodiscard]] const std::vector<SparseEntry>& entries() const { return entries_; }

    /// Stored value, or nullopt for structural zeros.
    [[nodiscard]] std::optional<double> find(std::size_t row, std::size_t col) const;
    [[nodiscard]] double at(std::size_t row, std::size_t col) const { return find(row, col).value_or(0.0); }

    /// Entries of one row, in column order.
    [[nodiscard]] std::vector<SparseEntry> row_entries(std::size_t row) const;

    [[nodiscard]] bool is_symmetric() const;

    [[nodiscard]] CsrMatrix to_csr() const;
    [[nodiscard]] Matrix to_dense() const;

    bool operator==(const SparseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<SparseEntry> entries_;
    std::vector<std::size_t> row_start_;   // rows_ + 1 offsets into entries_
};

}  // namespace hetgraph
