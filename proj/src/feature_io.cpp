#include "tpwng/feature_io.hpp"

#include "tpwng/errors.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tpwng::data {

namespace {

constexpr std::array<char, 4> kMagic = {'T', 'P', 'F', '1'};
constexpr std::size_t kHeaderBytes = 12;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

void put_f64(std::vector<std::byte>& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFFu));
}

double get_f64(std::span<const std::byte> b, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::to_integer<std::uint64_t>(b[at + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::vector<std::byte> encode_features(const Matrix& frames) {
  if (frames.rows() < 1 || frames.cols() < 1) {
    throw ContractError("feature matrix must have at least one frame and one dimension");
  }
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes + static_cast<std::size_t>(frames.size()) * 8);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, static_cast<std::uint32_t>(frames.rows()));
  put_u32(out, static_cast<std::uint32_t>(frames.cols()));
  // Row-major storage is already frame-major.
  for (Eigen::Index i = 0; i < frames.size(); ++i) put_f64(out, frames.data()[i]);
  return out;
}

Matrix decode_features(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("TPF1: truncated header");
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (bytes[i] != static_cast<std::byte>(kMagic[i])) throw FormatError("TPF1: bad magic");
  }
  const std::uint32_t frames = get_u32(bytes, 4);
  const std::uint32_t dim = get_u32(bytes, 8);
  if (frames == 0) throw FormatError("TPF1: zero frames");
  if (dim == 0) throw FormatError("TPF1: zero dimension");
  const std::uint64_t payload = static_cast<std::uint64_t>(frames) * dim * 8;
  if (bytes.size() - kHeaderBytes < payload) throw FormatError("TPF1: truncated payload");
  if (bytes.size() - kHeaderBytes > payload) throw FormatError("TPF1: trailing bytes after payload");

  Matrix m(frames, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = get_f64(bytes, kHeaderBytes + static_cast<std::size_t>(i) * 8);
  }
  return m;
}

void save_features(const std::filesystem::path& path, const Matrix& frames) {
  const auto bytes = encode_features(frames);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Matrix load_features(const std::filesystem::path& path, std::optional<Eigen::Index> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Matrix m;
  try {
    m = decode_features(std::as_bytes(std::span<const char>(raw)));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (expected_dim && m.cols() != *expected_dim) {
    throw ContractError(path.string() + ": dimension " + std::to_string(m.cols()) +
                        " does not match manifest dimension " + std::to_string(*expected_dim));
  }
  return m;
}

}  // namespace tpwng::data
