#pragma once

// Helpers shared by the solver sources; not installed.

#include "mmblock/tensor.hpp"

#include <algorithm>
#include <vector>

namespace mmb::detail {

inline Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

/// Keeps the listed mode-0 rows, in order.
inline DenseTensor gather_rows(const DenseTensor& data, const std::vector<std::size_t>& rows) {
    Shape shape = data.shape();
    const std::size_t extent = shape[0];
    shape[0] = rows.size();
    DenseTensor out(shape);
    const std::size_t fibers = data.size() / extent;
    for (std::size_t f = 0; f < fibers; ++f)
        for (std::size_t r = 0; r < rows.size(); ++r) out.data()[f * rows.size() + r] = data.data()[f * extent + rows[r]];
    return out;
}

inline Matrix embed_rows(const Matrix& m, const std::vector<std::size_t>& rows, std::size_t extent) {
    Matrix out = Matrix::Zero(idx(extent), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(idx(rows[r])) = m.row(idx(r));
    return out;
}

inline Matrix restrict_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(idx(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(idx(r)) = m.row(idx(rows[r]));
    return out;
}

/// extent x |rows| matrix whose columns are the unit vectors of `rows`.
inline Matrix selection_matrix(const std::vector<std::size_t>& rows, std::size_t extent) {
    Matrix out = Matrix::Zero(idx(extent), idx(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(idx(rows[r]), idx(r)) = 1.0;
    return out;
}

inline Vector padded(const Vector& s, std::size_t count) {
    Vector out = Vector::Zero(idx(count));
    const auto n = std::min<Eigen::Index>(s.size(), out.size());
    out.head(n) = s.head(n);
    return out;
}

inline std::vector<std::size_t> sorted_union(std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

} // namespace mmb::detail
