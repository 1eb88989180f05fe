#include "mmblock/linalg.hpp"

#include "mmblock/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmb {

void normalize_signs(Matrix& columns, Matrix* partner) {
    for (Eigen::Index j = 0; j < columns.cols(); ++j) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index i = 0; i < columns.rows(); ++i) {
            const double a = std::abs(columns(i, j));
            // Near-ties resolve to the lowest index so the choice is stable
            // under rounding noise.
            if (a > best_abs * (1.0 + 1e-12) + 1e-300) {
                best_abs = a;
                best = i;
            }
        }
        if (columns.rows() > 0 && columns(best, j) < 0.0) {
            columns.col(j) *= -1.0;
            if (partner != nullptr && j < partner->cols()) partner->col(j) *= -1.0;
        }
    }
}

SvdResult thin_svd(const Matrix& m) {
    if (!m.allFinite()) throw NumericalError("thin_svd: non-finite input");
    SvdResult out;
    const Eigen::Index k = std::min(m.rows(), m.cols());
    if (k == 0) {
        out.u = Matrix(m.rows(), 0);
        out.s = Vector(0);
        out.v = Matrix(m.cols(), 0);
        return out;
    }
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.s = svd.singularValues();
    out.v = svd.matrixV();
    normalize_signs(out.u, &out.v);
    return out;
}

double default_rcond(const Matrix& m) {
    return static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon();
}

Matrix pinv(const Matrix& m, std::optional<double> rcond) {
    const double tol_factor = rcond.value_or(default_rcond(m));
    if (tol_factor < 0.0) throw DimensionError("pinv: rcond must be non-negative");
    const auto svd = thin_svd(m);
    Matrix out = Matrix::Zero(m.cols(), m.rows());
    if (svd.s.size() == 0 || svd.s(0) == 0.0) return out;
    const double cutoff = tol_factor * svd.s(0);
    for (Eigen::Index j = 0; j < svd.s.size(); ++j) {
        if (svd.s(j) <= cutoff) break;
        out.noalias() += (svd.v.col(j) / svd.s(j)) * svd.u.col(j).transpose();
    }
    return out;
}

QrResult thin_qr(const Matrix& m) {
    const Eigen::Index k = std::min(m.rows(), m.cols());
    Eigen::HouseholderQR<Matrix> qr(m);
    QrResult out;
    out.q = qr.householderQ() * Matrix::Identity(m.rows(), k);
    out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    return out;
}

Matrix complete_basis(const Matrix& basis, std::size_t count) {
    const Eigen::Index rows = basis.rows();
    const auto target = static_cast<Eigen::Index>(count);
    if (target > rows) throw DimensionError("complete_basis: more columns requested than rows");
    if (basis.cols() >= target) return basis.leftCols(target);
    Matrix out(rows, target);
    out.leftCols(basis.cols()) = basis;
    Eigen::Index filled = basis.cols();
    for (Eigen::Index axis = 0; axis < rows && filled < target; ++axis) {
        Vector candidate = Vector::Unit(rows, axis);
        // Two Gram-Schmidt passes keep the completed set orthonormal to
        // working precision.
        for (int pass = 0; pass < 2; ++pass) {
            candidate -= out.leftCols(filled) * (out.leftCols(filled).transpose() * candidate);
        }
        const double norm = candidate.norm();
        if (norm > 1e-8) out.col(filled++) = candidate / norm;
    }
    if (filled < target) throw NumericalError("complete_basis: could not extend basis");
    return out;
}

Matrix leading_left_singular_vectors(const Matrix& m, std::size_t count) {
    if (count > static_cast<std::size_t>(m.rows())) {
        throw DimensionError("requested rank exceeds mode extent");
    }
    const auto svd = thin_svd(m);
    const auto available = std::min<Eigen::Index>(svd.u.cols(), static_cast<Eigen::Index>(count));
    return complete_basis(svd.u.leftCols(available), count);
}

double max_principal_angle(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("principal angles need equal row counts");
    if (a.cols() == 0 || b.cols() == 0) return 0.0;
    const Matrix qa = thin_qr(a).q;
    const Matrix qb = thin_qr(b).q;
    // Compare the smaller space against the larger one.
    const Matrix& small = qa.cols() <= qb.cols() ? qa : qb;
    const Matrix& large = qa.cols() <= qb.cols() ? qb : qa;
    const Matrix residual = small - large * (large.transpose() * small);
    const auto svd = thin_svd(residual);
    const double sine = svd.s.size() > 0 ? std::min(1.0, svd.s(0)) : 0.0;
    return std::asin(sine);
}

double orthonormality_residual(const Matrix& q) {
    if (q.cols() == 0) return 0.0;
    return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

} // namespace mmb
