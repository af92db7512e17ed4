#pragma once

#include "tpwng/config.hpp"
#include "tpwng/manifest.hpp"
#include "tpwng/prompt.hpp"
#include "tpwng/tcsal.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tpwng {

/// Every trainable piece of the pipeline.
///
/// The text side (prompt bank + NVP feed-forward block) is trained only
/// through the similarity losses; the scoring side (TCSAL + classifier) is the
/// only part used at inference.
class Model {
 public:
  Model(const std::vector<std::string>& class_names, Eigen::Index dim, const TrainConfig& cfg);

  std::vector<ad::Parameter*> parameters();
  std::vector<ad::Parameter*> text_parameters();
  std::vector<ad::Parameter*> scoring_parameters();

  int num_classes() const { return prompts.num_classes(); }
  Eigen::Index dim() const { return prompts.dim(); }

  /// FNV-1a over names, shapes and raw bytes of every parameter.
  std::uint64_t checksum();

  void save(const std::filesystem::path& path);
  /// Throws FormatError if the file does not match this model's layout.
  void load(const std::filesystem::path& path);

  prompt::PromptBank prompts;
  prompt::FfnBlock nvp_ffn;
  tcsal::TcsalStack encoder;
  tcsal::FrameClassifier classifier;
};

/// Model sized from a dataset manifest.
Model make_model(const data::DatasetManifest& manifest, const TrainConfig& cfg);

}  // namespace tpwng
