#pragma once

#include "tpwng/manifest.hpp"

#include <cstdint>
#include <filesystem>

namespace tpwng::data {

/// Controls the synthetic benchmark.
///
/// Each class has a unit-norm prototype. Normal videos are the normal
/// prototype plus i.i.d. Gaussian noise per frame; abnormal videos are the
/// same background with one contiguous segment replaced by the prototype of
/// their class plus noise. Splits are half normal, half abnormal.
///
/// Prototypes lean towards the frozen class tokens by `text_alignment`, the
/// cosine a vision-language encoder would give between a class name and its
/// frames: p = normalize(a * token + sqrt(1 - a^2) * g) with g a random unit
/// vector.
struct SyntheticConfig {
  std::string name = "synthetic";
  int num_classes = 4;  // k, including the normal class
  int dim = 64;
  int frames = 64;
  int train_videos = 200;
  int test_videos = 60;
  double segment_min = 0.1;  // anomaly length as a fraction of F, in (0, 1]
  double segment_max = 0.5;
  double separation = 1.0;  // minimum pairwise Euclidean distance of prototypes
  double noise = 0.1;       // per-dimension standard deviation, > 0
  double text_alignment = 0.5;  // in [0, 1)
  std::uint64_t seed = 7;
};

void validate(const SyntheticConfig& cfg);

struct SyntheticDataset {
  DatasetManifest manifest;
  Matrix prototypes;  // row i is the prototype of class index i + 1
};

/// Writes `<out_dir>/manifest.json` and one TPF1 file per video under
/// `<out_dir>/features/`. Frame truth is recorded for the test split.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace tpwng::data
