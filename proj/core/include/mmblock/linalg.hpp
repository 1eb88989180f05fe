#pragma once

#include "mmblock/tensor.hpp"

#include <optional>

namespace mmb {

struct SvdResult {
    Matrix u;  ///< rows x k, orthonormal columns
    Vector s;  ///< k non-increasing singular values, k = min(rows, cols)
    Matrix v;  ///< cols x k, orthonormal columns
};

/**
 * Thin SVD with a deterministic sign convention: in every left singular
 * vector the entry of largest magnitude (lowest index on ties) is
 * non-negative. The matching right singular vector is flipped with it.
 * Throws NumericalError on non-finite input.
 */
SvdResult thin_svd(const Matrix& m);

/// max(rows, cols) * machine epsilon.
double default_rcond(const Matrix& m);

/// Moore-Penrose pseudo-inverse; singular values <= rcond * s_max are dropped.
Matrix pinv(const Matrix& m, std::optional<double> rcond = std::nullopt);

struct QrResult {
    Matrix q;  ///< rows x min(rows, cols), orthonormal columns
    Matrix r;  ///< min(rows, cols) x cols, upper trapezoidal
};

/// Thin Householder QR, m = q * r.
QrResult thin_qr(const Matrix& m);

/// Leading `count` left singular vectors; extended to an orthonormal set
/// when `count` exceeds the numerical column count of the SVD.
Matrix leading_left_singular_vectors(const Matrix& m, std::size_t count);

/**
 * Extends the orthonormal columns of `basis` to `count` orthonormal columns.
 * Existing columns are kept; new columns are drawn deterministically from the
 * coordinate axes.
 */
Matrix complete_basis(const Matrix& basis, std::size_t count);

/// Largest principal angle (radians) between the column spaces of a and b.
/// Computed through sines so that tiny angles are resolved accurately.
double max_principal_angle(const Matrix& a, const Matrix& b);

/// ||Q^T Q - I||_max.
double orthonormality_residual(const Matrix& q);

/// Applies the SVD sign convention to a column set in place, flipping the
/// matching columns of `partner` (which may be empty).
void normalize_signs(Matrix& columns, Matrix* partner = nullptr);

} // namespace mmb
