#include "mmblock/dten.hpp"

#include "mmblock/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mmb {

namespace {

constexpr std::array<char, 5> kMagic{'D', 'T', 'E', 'N', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
    if (!in) throw ConfigError("DTEN: unexpected end of stream");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

} // namespace

void write_dten(std::ostream& out, const DenseTensor& tensor) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.order()));
    for (std::size_t e : tensor.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (double v : tensor.data()) put_le<double>(out, v);
    if (!out) throw ConfigError("DTEN: write failed");
}

DenseTensor read_dten(std::istream& in) {
    std::array<char, 5> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw ConfigError("DTEN: bad magic");
    const auto order = get_le<std::uint32_t>(in);
    Shape shape(order);
    for (auto& e : shape) {
        e = get_le<std::uint32_t>(in);
        if (e == 0) throw ConfigError("DTEN: zero extent");
    }
    std::vector<double> data(element_count(shape));
    for (double& v : data) v = get_le<double>(in);
    return DenseTensor(std::move(shape), std::move(data));
}

void write_dten(const std::filesystem::path& path, const DenseTensor& tensor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    write_dten(out, tensor);
}

DenseTensor read_dten(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    return read_dten(in);
}

DenseTensor to_tensor(const Matrix& m) {
    return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                       std::vector<double>(m.data(), m.data() + m.size()));
}

DenseTensor to_tensor(const Vector& v) {
    return DenseTensor({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

Matrix to_matrix(const DenseTensor& t) {
    if (t.order() != 2) throw DimensionError("to_matrix: expected an order-2 tensor");
    return Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(t.extent(0)),
                                    static_cast<Eigen::Index>(t.extent(1)));
}

Vector to_vector(const DenseTensor& t) { return vec(t); }

} // namespace mmb
