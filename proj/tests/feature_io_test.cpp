#include "tpwng/errors.hpp"
#include "tpwng/feature_io.hpp"
#include "test_util.hpp"

#include <fstream>

namespace tpwng::data {
namespace {

using testing::random_matrix;
using testing::TempDir;

TEST(FeatureIo, RoundTripIsBitExact) {
  Rng rng(11);
  TempDir dir;
  Matrix m = random_matrix(7, 16, rng);
  m(0, 0) = -0.0;
  m(3, 5) = std::numeric_limits<double>::denorm_min();
  save_features(dir / "a.tpf", m);
  const Matrix back = load_features(dir / "a.tpf");
  ASSERT_EQ(back.rows(), 7);
  ASSERT_EQ(back.cols(), 16);
  EXPECT_EQ(std::memcmp(back.data(), m.data(), sizeof(double) * m.size()), 0);
}

TEST(FeatureIo, LayoutIsLittleEndianFrameMajor) {
  Matrix m(2, 1);
  m << 1.0, 2.0;
  const auto bytes = encode_features(m);
  ASSERT_EQ(bytes.size(), 12u + 16u);
  EXPECT_EQ(static_cast<char>(bytes[0]), 'T');
  EXPECT_EQ(static_cast<char>(bytes[3]), '1');
  EXPECT_EQ(std::to_integer<int>(bytes[4]), 2);  // F
  EXPECT_EQ(std::to_integer<int>(bytes[8]), 1);  // D
  // 1.0 = 0x3FF0000000000000, stored low byte first.
  EXPECT_EQ(std::to_integer<int>(bytes[12 + 7]), 0x3F);
  EXPECT_EQ(std::to_integer<int>(bytes[12 + 6]), 0xF0);
  EXPECT_EQ(std::to_integer<int>(bytes[20 + 7]), 0x40);
}

TEST(FeatureIo, RejectsMalformedFiles) {
  Matrix m = Matrix::Ones(3, 2);
  auto bytes = encode_features(m);

  auto bad_magic = bytes;
  bad_magic[0] = std::byte{'X'};
  EXPECT_THROW(decode_features(bad_magic), FormatError);

  auto zero_frames = bytes;
  zero_frames[4] = std::byte{0};
  EXPECT_THROW(decode_features(zero_frames), FormatError);

  auto zero_dim = bytes;
  zero_dim[8] = std::byte{0};
  EXPECT_THROW(decode_features(zero_dim), FormatError);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_features(truncated), FormatError);

  auto trailing = bytes;
  trailing.push_back(std::byte{0});
  EXPECT_THROW(decode_features(trailing), FormatError);

  EXPECT_THROW(decode_features(std::span<const std::byte>(bytes.data(), 5)), FormatError);
}

TEST(FeatureIo, DimensionCheckOnLoad) {
  TempDir dir;
  save_features(dir / "a.tpf", Matrix::Zero(4, 8));
  EXPECT_NO_THROW(load_features(dir / "a.tpf", 8));
  EXPECT_THROW(load_features(dir / "a.tpf", 9), ContractError);
}

TEST(FeatureIo, MissingFile) {
  TempDir dir;
  EXPECT_THROW(load_features(dir / "missing.tpf"), FormatError);
}

TEST(FeatureIo, RefusesEmptyMatrix) { EXPECT_THROW(encode_features(Matrix(0, 3)), ContractError); }

}  // namespace
}  // namespace tpwng::data
