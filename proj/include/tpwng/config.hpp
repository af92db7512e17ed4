#pragma once

// Run configuration: one flat JSON document, optionally starting from a
// named preset, with command-line flags applied on top.
//
// Keys (all optional):
//   preset            "ucf-like" | "xd-like" | "synthetic"   (applied first)
//   seed              master seed; every module derives its own stream
//   learning_rate, weight_decay, epochs, batch_normal, batch_abnormal
//   alpha, theta, label_polarity ("anomaly" | "literal"), normality_guidance ("on" | "off")
//   lambda1, lambda2, loss_rank_normal, loss_rank_abnormal, loss_dil
//   context_length, nvp ("similarity-aggregate" | "frame-average" | "off"), nvp_ffn_multiplier
//   temporal ("tcsal" | "plain-encoder"), layers, heads, softness, tcsal_ffn_multiplier
//   dataset_name, classes, dim, frames, train_videos, test_videos,
//   segment_min, segment_max, separation, noise, text_alignment   (gen-data only)

#include "tpwng/losses.hpp"
#include "tpwng/plg.hpp"
#include "tpwng/prompt.hpp"
#include "tpwng/synthetic.hpp"
#include "tpwng/tcsal.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace tpwng {

/// Invalid configuration document or value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::string preset = "ucf-like";
  std::uint64_t seed = 7;
  double learning_rate = 1e-3;
  double weight_decay = 0.005;
  int epochs = 50;
  int batch_normal = 32;
  int batch_abnormal = 32;

  plg::PlgConfig plg;
  bool normality_guidance = true;  // off forces alpha = 0

  loss::LossWeights weights;
  loss::LossToggles toggles;

  int context_length = 8;
  prompt::NvpMode nvp = prompt::NvpMode::SimilarityAggregate;
  int nvp_ffn_multiplier = 2;

  tcsal::TcsalConfig tcsal;

  /// PLG settings actually used, after the normality-guidance switch.
  plg::PlgConfig effective_plg() const;
};

void validate(const TrainConfig& cfg);

struct RunConfig {
  TrainConfig train;
  data::SyntheticConfig synthetic;
};

/// Preset defaults. Throws ConfigError for an unknown name.
RunConfig preset_config(std::string_view name);

/// Applies a flat JSON object. A "preset" key resets to that preset before
/// the remaining keys are applied. Throws ConfigError on unknown keys or
/// mistyped values.
void apply_json(RunConfig& cfg, const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const data::SyntheticConfig& cfg);

/// 16 hex digits identifying every training-relevant setting.
std::string config_hash(const TrainConfig& cfg);

std::string to_string(prompt::NvpMode mode);
std::string to_string(tcsal::TemporalMode mode);
std::string to_string(plg::LabelPolarity polarity);
prompt::NvpMode parse_nvp_mode(std::string_view s);
tcsal::TemporalMode parse_temporal_mode(std::string_view s);
plg::LabelPolarity parse_polarity(std::string_view s);
bool parse_on_off(std::string_view s);

}  // namespace tpwng
