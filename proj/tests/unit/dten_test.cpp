#include "mmblock/dten.hpp"
#include "mmblock/error.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

namespace mmb {
namespace {

TEST(Dten, ByteLayout) {
    const DenseTensor t({2, 1}, {1.0, -2.5});
    std::ostringstream out;
    write_dten(out, t);
    const std::string bytes = out.str();
    ASSERT_EQ(bytes.size(), 5u + 4u + 2u * 4u + 2u * 8u);
    EXPECT_EQ(bytes.substr(0, 5), "DTEN1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 2u);  // order, little-endian
    EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 2u);  // first extent
    EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 1u); // second extent
    double second = 0.0;
    std::memcpy(&second, bytes.data() + 17 + 8, 8);
    EXPECT_EQ(second, -2.5);
}

TEST(Dten, RoundTripPreservesBits) {
    std::mt19937_64 rng(67);
    const auto t = testing::random_tensor({3, 4, 2}, rng);
    std::stringstream buf;
    write_dten(buf, t);
    EXPECT_EQ(read_dten(buf), t);
}

TEST(Dten, RejectsBadMagicAndTruncation) {
    std::stringstream bad("XTEN1");
    EXPECT_THROW(read_dten(bad), ConfigError);
    std::ostringstream out;
    write_dten(out, DenseTensor({4}, {1, 2, 3, 4}));
    std::stringstream truncated(out.str().substr(0, out.str().size() - 3));
    EXPECT_THROW(read_dten(truncated), ConfigError);
}

TEST(Dten, MatrixAndVectorHelpers) {
    std::mt19937_64 rng(71);
    const Matrix m = testing::random_matrix(3, 2, rng);
    EXPECT_EQ(to_matrix(to_tensor(m)), m);
    const Vector v = Vector::LinSpaced(4, 0.0, 3.0);
    EXPECT_EQ(to_vector(to_tensor(v)), v);
}

} // namespace
} // namespace mmb
