#include "hetgraph/sparse.hpp"

#include "hetgraph/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hetgraph {

SparseMatrix SparseMatrix::from_entries(std::size_t rows, std::size_t cols, std::vector<SparseEntry> entries) {
    for (const auto& e : entries) {
        if (e.row >= rows || e.col >= cols) {
            throw DataError("sparse entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                            ") out of range for " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        if (!std::isfinite(e.value)) {
            throw NumericalError("non-finite sparse entry at (" + std::to_string(e.row) + "," +
                                 std::to_string(e.col) + ")");
        }
    }
    std::sort(entries.begin(), entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].row == entries[i - 1].row && entries[i].col == entries[i - 1].col) {
            throw DataError("duplicate sparse entry at (" + std::to_string(entries[i].row) + "," +
                            std::to_string(entries[i].col) + ")");
        }
    }
    SparseMatrix m(rows, cols);
    m.row_start_.assign(rows + 1, 0);
    for (const auto& e : entries) ++m.row_start_[e.row + 1];
    for (std::size_t r = 0; r < rows; ++r) m.row_start_[r + 1] += m.row_start_[r];
    m.entries_ = std::move(entries);
    return m;
}

std::optional<double> SparseMatrix::find(std::size_t row, std::size_t col) const {
    if (row >= rows_ || row_start_.empty()) return std::nullopt;
    const auto first = entries_.begin() + static_cast<std::ptrdiff_t>(row_start_[row]);
    const auto last = entries_.begin() + static_cast<std::ptrdiff_t>(row_start_[row + 1]);
    auto it = std::lower_bound(first, last, col, [](const SparseEntry& e, std::size_t c) { return e.col < c; });
    if (it == last || it->col != col) return std::nullopt;
    return it->value;
}

std::vector<SparseEntry> SparseMatrix::row_entries(std::size_t row) const {
    if (row >= rows_ || row_start_.empty()) return {};
    return {entries_.begin() + static_cast<std::ptrdiff_t>(row_start_[row]),
            entries_.begin() + static_cast<std::ptrdiff_t>(row_start_[row + 1])};
}

bool SparseMatrix::is_symmetric() const {
    if (rows_ != cols_) return false;
    for (const auto& e : entries_) {
        const auto mirror = find(e.col, e.row);
        if (!mirror || *mirror != e.value) return false;
    }
    return true;
}

CsrMatrix SparseMatrix::to_csr() const {
    CsrMatrix m(static_cast<std::int64_t>(rows_), static_cast<std::int64_t>(cols_));
    std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
    triplets.reserve(entries_.size());
    for (const auto& e : entries_) {
        triplets.emplace_back(static_cast<std::int64_t>(e.row), static_cast<std::int64_t>(e.col), e.value);
    }
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

Matrix SparseMatrix::to_dense() const {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    for (const auto& e : entries_) m(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) = e.value;
    return m;
}

}  // namespace hetgraph
