#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mmb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;

/// Product of all extents (1 for an empty shape).
std::size_t element_count(const Shape& shape);

/**
 * Dense M-way array of doubles.
 *
 * Elements are stored in canonical order: the mode-0 index varies fastest,
 * then mode 1, and so on. Mode 0 is the measurement mode throughout the
 * library. Every extent must be positive.
 */
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape);
    DenseTensor(Shape shape, std::vector<double> data);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t order() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t extent(std::size_t mode) const;
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> data() noexcept { return data_; }

    [[nodiscard]] std::size_t linear_index(std::span<const std::size_t> index) const;
    double& operator()(std::span<const std::size_t> index) { return data_[linear_index(index)]; }
    double operator()(std::span<const std::size_t> index) const { return data_[linear_index(index)]; }
    double& at(std::initializer_list<std::size_t> index);
    [[nodiscard]] double at(std::initializer_list<std::size_t> index) const;

    [[nodiscard]] double frobenius_norm() const noexcept;
    [[nodiscard]] double squared_norm() const noexcept;
    [[nodiscard]] bool all_finite() const noexcept;

    DenseTensor& operator+=(const DenseTensor& other);
    DenseTensor& operator-=(const DenseTensor& other);
    DenseTensor& operator*=(double scale) noexcept;

    friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

DenseTensor operator+(DenseTensor lhs, const DenseTensor& rhs);
DenseTensor operator-(DenseTensor lhs, const DenseTensor& rhs);
DenseTensor operator*(DenseTensor lhs, double scale);

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const DenseTensor& a, const DenseTensor& b);

/// ||a - b|| / ||b||, or ||a - b|| when b is zero.
double relative_error(const DenseTensor& approx, const DenseTensor& reference);

/**
 * Mode-m matrixizing (flattening).
 *
 * Row index is i_m; the column index sweeps the remaining modes with smaller
 * mode indexes varying faster: k = sum_{n != m} i_n * prod_{l != m, l < n} I_l
 * (0-based form of the 1-based textbook formula).
 */
Matrix matrixize(const DenseTensor& tensor, std::size_t mode);

/// Inverse of matrixize for the given mode and target shape.
DenseTensor tensorize(const Matrix& matrix, std::size_t mode, const Shape& shape);

/// C = A x_m B, i.e. C_[m] = B * A_[m]. Requires B.cols() == I_m.
DenseTensor mode_product(const DenseTensor& tensor, std::size_t mode, const Matrix& factor);

/// A x_m B^T without forming the transpose.
DenseTensor mode_product_transposed(const DenseTensor& tensor, std::size_t mode, const Matrix& factor);

/**
 * Multiplies every mode m with factors[m] (or its transpose), skipping the
 * mode `skip` when it is a valid index. Empty matrices in `factors` are
 * treated as identity.
 */
DenseTensor multi_mode_product(const DenseTensor& tensor, std::span<const Matrix> factors,
                               bool transpose, std::size_t skip = static_cast<std::size_t>(-1));

/// [U (x) V]_{ik,jl} = u_ij v_kl with the row/col index of V varying fastest.
Matrix kronecker(const Matrix& u, const Matrix& v);

/// Block Khatri-Rao: [kron(U_1, V_1) | ... | kron(U_L, V_L)].
Matrix khatri_rao_block(std::span<const Matrix> u_blocks, std::span<const Matrix> v_blocks);

/// Canonical-order flattening.
Vector vec(const DenseTensor& tensor);
DenseTensor unvec(const Vector& values, const Shape& shape);

} // namespace mmb
