#pragma once

// TPF1 frame-embedding files.
//
// Layout (all little-endian):
//   bytes 0..3   magic "TPF1"
//   bytes 4..7   uint32 F (frames, >= 1)
//   bytes 8..11  uint32 D (embedding dimension, >= 1)
//   then F*D IEEE-754 float64 values, frame-major.

#include "tpwng/autodiff.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace tpwng::data {

using ad::Matrix;

std::vector<std::byte> encode_features(const Matrix& frames);

/// Throws FormatError on bad magic, F or D of zero, or a payload whose size
/// is not exactly F*D*8 bytes.
Matrix decode_features(std::span<const std::byte> bytes);

void save_features(const std::filesystem::path& path, const Matrix& frames);

/// Throws ContractError when `expected_dim` is given and differs from D.
Matrix load_features(const std::filesystem::path& path,
                     std::optional<Eigen::Index> expected_dim = std::nullopt);

}  // namespace tpwng::data
