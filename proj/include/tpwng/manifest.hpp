#pragma once

#include "tpwng/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tpwng::data {

using ad::Matrix;

/// One video: F x D frame embeddings plus its weak label.
///
/// Class indices are 1-based. Abnormal videos (label 1) carry an index in
/// [1, k-1]; normal videos (label 0) carry the normal index k.
struct FeatureSequence {
  std::string video_id;
  Matrix frames;
  int label = 0;
  int class_index = 0;
  std::optional<std::vector<std::uint8_t>> frame_truth;  // test splits only

  Eigen::Index num_frames() const { return frames.rows(); }
  bool abnormal() const { return label == 1; }
};

struct VideoEntry {
  std::string path;  // relative to the manifest directory unless absolute
  int label = 0;
  int class_index = 0;
  std::string split;
  std::optional<std::vector<std::uint8_t>> frame_truth;
};

struct DatasetManifest {
  std::string name;
  int dim = 0;
  int num_classes = 0;
  std::vector<std::string> classes;  // classes.back() is the normal class
  std::vector<VideoEntry> videos;
  std::filesystem::path base_dir;  // not serialized

  int normal_index() const { return num_classes; }
};

/// Checks every manifest invariant; throws ContractError on the first violation.
void validate(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads every video of a split, checking D against the manifest.
std::vector<FeatureSequence> load_split(const DatasetManifest& manifest, std::string_view split);

/// Seed of the fixed stand-in text encoder. Shared by every model and by the
/// synthetic generator, the way a pretrained encoder is shared.
inline constexpr std::uint64_t kTextEncoderSeed = 0x7e47e9c0de5eedULL;

/// Frozen per-class token vectors standing in for a tokenizer + text encoder.
/// Row i is the unit-norm vector for class_names[i], derived only from
/// (seed, name). Throws ContractError on duplicate names or fewer than 2.
Matrix class_token_embeddings(const std::vector<std::string>& class_names, std::uint64_t seed,
                              Eigen::Index dim);

}  // namespace tpwng::data
