#include "exact.hpp"

#include <cstddef>
#include <stdexcept>
#include <utility>

namespace bnm::exact {

namespace {

// Reduces a (in place) to row echelon form.  Returns the pivot column of
// each pivot row, in order.
std::vector<std::size_t> echelonize(RationalMatrix& a) {
    std::vector<std::size_t> pivots;
    if (a.empty()) return pivots;
    const std::size_t rows = a.size();
    const std::size_t cols = a[0].size();
    for (const auto& row : a) {
        if (row.size() != cols) throw std::invalid_argument("ragged matrix");
    }
    std::size_t r = 0;
    for (std::size_t c = 0; c < cols && r < rows; ++c) {
        std::size_t pivot = r;
        while (pivot < rows && a[pivot][c] == 0) ++pivot;
        if (pivot == rows) continue;
        std::swap(a[r], a[pivot]);
        for (std::size_t i = r + 1; i < rows; ++i) {
            if (a[i][c] == 0) continue;
            const Rational f = a[i][c] / a[r][c];
            for (std::size_t j = c; j < cols; ++j) a[i][j] -= f * a[r][j];
        }
        pivots.push_back(c);
        ++r;
    }
    return pivots;
}

}  // namespace

int rank(RationalMatrix a) { return static_cast<int>(echelonize(a).size()); }

std::optional<std::vector<Rational>> solve(RationalMatrix a, std::vector<Rational> b) {
    const std::size_t rows = a.size();
    if (b.size() != rows) throw std::invalid_argument("rhs length mismatch");
    const std::size_t cols = rows == 0 ? 0 : a[0].size();
    for (std::size_t i = 0; i < rows; ++i) a[i].push_back(b[i]);
    RationalMatrix aug = std::move(a);
    const std::vector<std::size_t> pivots = echelonize(aug);
    // A pivot in the appended column means b escapes the column span.
    if (!pivots.empty() && pivots.back() == cols) return std::nullopt;

    std::vector<Rational> x(cols, Rational(0));
    for (std::size_t k = pivots.size(); k-- > 0;) {
        const std::size_t c = pivots[k];
        Rational acc = aug[k][cols];
        for (std::size_t j = c + 1; j < cols; ++j) {
            if (aug[k][j] != 0 && x[j] != 0) acc -= aug[k][j] * x[j];
        }
        x[c] = acc / aug[k][c];
    }
    return x;
}

std::optional<std::vector<Rational>> coordinates_in_span(
    const std::vector<std::vector<Rational>>& columns, const std::vector<Rational>& target) {
    const std::size_t dim = target.size();
    for (const auto& col : columns) {
        if (col.size() != dim) throw std::invalid_argument("column length mismatch");
    }
    RationalMatrix a(dim, std::vector<Rational>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        for (std::size_t i = 0; i < dim; ++i) a[i][j] = columns[j][i];
    }
    return solve(std::move(a), target);
}

}  // namespace bnm::exact
