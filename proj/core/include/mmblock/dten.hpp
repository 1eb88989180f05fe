#pragma once

#include "mmblock/tensor.hpp"

#include <filesystem>
#include <iosfwd>

namespace mmb {

// DTEN binary layout: the 5 ASCII bytes "DTEN1", a little-endian uint32 order
// M, M little-endian uint32 extents, then prod(extents) little-endian IEEE-754
// doubles in canonical order.

void write_dten(std::ostream& out, const DenseTensor& tensor);
DenseTensor read_dten(std::istream& in);

void write_dten(const std::filesystem::path& path, const DenseTensor& tensor);
DenseTensor read_dten(const std::filesystem::path& path);

// Matrices travel as order-2 tensors and vectors as order-1 tensors.
DenseTensor to_tensor(const Matrix& m);
DenseTensor to_tensor(const Vector& v);
Matrix to_matrix(const DenseTensor& t);
Vector to_vector(const DenseTensor& t);

} // namespace mmb
