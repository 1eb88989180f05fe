#include "mmblock/tensor.hpp"

#include "mmblock/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace mmb {

namespace {

struct ModeSplit {
    std::size_t left = 1;
    std::size_t extent = 1;
    std::size_t right = 1;
};

ModeSplit split_at(const Shape& shape, std::size_t mode) {
    ModeSplit s;
    for (std::size_t l = 0; l < mode; ++l) s.left *= shape[l];
    s.extent = shape[mode];
    for (std::size_t l = mode + 1; l < shape.size(); ++l) s.right *= shape[l];
    return s;
}

void check_mode(const Shape& shape, std::size_t mode) {
    if (mode >= shape.size()) {
        throw DimensionError("mode " + std::to_string(mode) + " out of range for order-" +
                             std::to_string(shape.size()) + " tensor");
    }
}

} // namespace

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
    if (std::any_of(shape_.begin(), shape_.end(), [](std::size_t e) { return e == 0; })) {
        throw DimensionError("tensor extents must be positive");
    }
    data_.assign(element_count(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (std::any_of(shape_.begin(), shape_.end(), [](std::size_t e) { return e == 0; })) {
        throw DimensionError("tensor extents must be positive");
    }
    if (data_.size() != element_count(shape_)) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(element_count(shape_)));
    }
}

std::size_t DenseTensor::extent(std::size_t mode) const {
    check_mode(shape_, mode);
    return shape_[mode];
}

std::size_t DenseTensor::linear_index(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw DimensionError("index arity does not match tensor order");
    std::size_t offset = 0;
    std::size_t stride = 1;
    for (std::size_t m = 0; m < shape_.size(); ++m) {
        if (index[m] >= shape_[m]) throw DimensionError("tensor index out of range");
        offset += index[m] * stride;
        stride *= shape_[m];
    }
    return offset;
}

double& DenseTensor::at(std::initializer_list<std::size_t> index) {
    return data_[linear_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

double DenseTensor::at(std::initializer_list<std::size_t> index) const {
    return data_[linear_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

double DenseTensor::squared_norm() const noexcept {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return acc;
}

double DenseTensor::frobenius_norm() const noexcept { return std::sqrt(squared_norm()); }

bool DenseTensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseTensor& DenseTensor::operator+=(const DenseTensor& other) {
    if (other.shape_ != shape_) throw DimensionError("tensor shapes differ in +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

DenseTensor& DenseTensor::operator-=(const DenseTensor& other) {
    if (other.shape_ != shape_) throw DimensionError("tensor shapes differ in -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

DenseTensor& DenseTensor::operator*=(double scale) noexcept {
    for (double& v : data_) v *= scale;
    return *this;
}

DenseTensor operator+(DenseTensor lhs, const DenseTensor& rhs) { return lhs += rhs; }
DenseTensor operator-(DenseTensor lhs, const DenseTensor& rhs) { return lhs -= rhs; }
DenseTensor operator*(DenseTensor lhs, double scale) { return lhs *= scale; }

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("tensor shapes differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

double relative_error(const DenseTensor& approx, const DenseTensor& reference) {
    const double diff = (approx - reference).frobenius_norm();
    const double ref = reference.frobenius_norm();
    return ref > 0.0 ? diff / ref : diff;
}

Matrix matrixize(const DenseTensor& tensor, std::size_t mode) {
    check_mode(tensor.shape(), mode);
    const auto s = split_at(tensor.shape(), mode);
    Matrix out(static_cast<Eigen::Index>(s.extent), static_cast<Eigen::Index>(s.left * s.right));
    const double* src = tensor.data().data();
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t i = 0; i < s.extent; ++i) {
            const double* fiber = src + s.left * (i + s.extent * r);
            for (std::size_t l = 0; l < s.left; ++l) {
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l + s.left * r)) = fiber[l];
            }
        }
    }
    return out;
}

DenseTensor tensorize(const Matrix& matrix, std::size_t mode, const Shape& shape) {
    check_mode(shape, mode);
    const auto s = split_at(shape, mode);
    if (static_cast<std::size_t>(matrix.rows()) != s.extent ||
        static_cast<std::size_t>(matrix.cols()) != s.left * s.right) {
        throw DimensionError("matrix " + std::to_string(matrix.rows()) + "x" + std::to_string(matrix.cols()) +
                             " cannot be tensorized along mode " + std::to_string(mode));
    }
    DenseTensor out(shape);
    double* dst = out.data().data();
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t i = 0; i < s.extent; ++i) {
            double* fiber = dst + s.left * (i + s.extent * r);
            for (std::size_t l = 0; l < s.left; ++l) {
                fiber[l] = matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l + s.left * r));
            }
        }
    }
    return out;
}

namespace {

// Shared kernel: each slab over the trailing modes is a (left x I_m) column-major
// block, and the product along mode m is slab * op(B)^T.
template <bool Transposed>
DenseTensor mode_product_impl(const DenseTensor& tensor, std::size_t mode, const Matrix& factor) {
    check_mode(tensor.shape(), mode);
    const auto s = split_at(tensor.shape(), mode);
    const auto inner = static_cast<std::size_t>(Transposed ? factor.rows() : factor.cols());
    const auto outer = static_cast<std::size_t>(Transposed ? factor.cols() : factor.rows());
    if (inner != s.extent) {
        throw DimensionError("mode product: factor inner dimension " + std::to_string(inner) +
                             " does not match extent " + std::to_string(s.extent) + " of mode " +
                             std::to_string(mode));
    }
    Shape out_shape = tensor.shape();
    out_shape[mode] = outer;
    DenseTensor out(out_shape);
    using ConstMap = Eigen::Map<const Matrix>;
    using MutMap = Eigen::Map<Matrix>;
    const auto left = static_cast<Eigen::Index>(s.left);
    for (std::size_t r = 0; r < s.right; ++r) {
        ConstMap slab(tensor.data().data() + r * s.left * s.extent, left, static_cast<Eigen::Index>(s.extent));
        MutMap dst(out.data().data() + r * s.left * outer, left, static_cast<Eigen::Index>(outer));
        if constexpr (Transposed) {
            dst.noalias() = slab * factor;
        } else {
            dst.noalias() = slab * factor.transpose();
        }
    }
    return out;
}

} // namespace

DenseTensor mode_product(const DenseTensor& tensor, std::size_t mode, const Matrix& factor) {
    return mode_product_impl<false>(tensor, mode, factor);
}

DenseTensor mode_product_transposed(const DenseTensor& tensor, std::size_t mode, const Matrix& factor) {
    return mode_product_impl<true>(tensor, mode, factor);
}

DenseTensor multi_mode_product(const DenseTensor& tensor, std::span<const Matrix> factors, bool transpose,
                               std::size_t skip) {
    if (factors.size() != tensor.order()) {
        throw DimensionError("multi_mode_product needs one factor per mode");
    }
    DenseTensor out = tensor;
    for (std::size_t m = 0; m < factors.size(); ++m) {
        if (m == skip || factors[m].size() == 0) continue;
        out = transpose ? mode_product_transposed(out, m, factors[m]) : mode_product(out, m, factors[m]);
    }
    return out;
}

Matrix kronecker(const Matrix& u, const Matrix& v) {
    Matrix out(u.rows() * v.rows(), u.cols() * v.cols());
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            out.block(i * v.rows(), j * v.cols(), v.rows(), v.cols()) = u(i, j) * v;
        }
    }
    return out;
}

Matrix khatri_rao_block(std::span<const Matrix> u_blocks, std::span<const Matrix> v_blocks) {
    if (u_blocks.size() != v_blocks.size()) {
        throw DimensionError("khatri_rao_block: block counts differ (" + std::to_string(u_blocks.size()) + " vs " +
                             std::to_string(v_blocks.size()) + ")");
    }
    if (u_blocks.empty()) return Matrix(0, 0);
    const Eigen::Index rows = u_blocks.front().rows() * v_blocks.front().rows();
    Eigen::Index cols = 0;
    for (std::size_t l = 0; l < u_blocks.size(); ++l) {
        if (u_blocks[l].rows() * v_blocks[l].rows() != rows) {
            throw DimensionError("khatri_rao_block: blocks have inconsistent row counts");
        }
        cols += u_blocks[l].cols() * v_blocks[l].cols();
    }
    Matrix out(rows, cols);
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l < u_blocks.size(); ++l) {
        const Matrix block = kronecker(u_blocks[l], v_blocks[l]);
        out.middleCols(offset, block.cols()) = block;
        offset += block.cols();
    }
    return out;
}

Vector vec(const DenseTensor& tensor) {
    return Eigen::Map<const Vector>(tensor.data().data(), static_cast<Eigen::Index>(tensor.size()));
}

DenseTensor unvec(const Vector& values, const Shape& shape) {
    if (static_cast<std::size_t>(values.size()) != element_count(shape)) {
        throw DimensionError("unvec: length does not match shape");
    }
    return DenseTensor(shape, std::vector<double>(values.data(), values.data() + values.size()));
}

} // namespace mmb
