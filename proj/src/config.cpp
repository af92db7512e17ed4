#include "tpwng/config.hpp"

#include "tpwng/errors.hpp"
#include "tpwng/random.hpp"

#include <cstdio>
#include <fstream>

namespace tpwng {

using nlohmann::json;

plg::PlgConfig TrainConfig::effective_plg() const {
  plg::PlgConfig out = plg;
  if (!normality_guidance) out.alpha = 0.0;
  return out;
}

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.batch_normal < 1 || c.batch_abnormal < 1) throw ConfigError("batch sizes must be >= 1");
  if (!(c.weights.lambda1 >= 0.0 && c.weights.lambda2 >= 0.0)) throw ConfigError("lambda1/lambda2 must be >= 0");
  if (c.context_length < 1) throw ConfigError("context_length must be >= 1");
  if (c.nvp_ffn_multiplier < 1 || c.tcsal.ffn_multiplier < 1) throw ConfigError("ffn multipliers must be >= 1");
  if (c.tcsal.layers < 1 || c.tcsal.heads < 1) throw ConfigError("layers and heads must be >= 1");
  if (!(c.tcsal.softness >= 1.0)) throw ConfigError("softness must be >= 1");
  try {
    plg::validate(c.plg);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig preset_config(std::string_view name) {
  RunConfig cfg;
  TrainConfig& t = cfg.train;
  t.preset = std::string(name);
  if (name == "ucf-like") {
    t.learning_rate = 1e-3;
    t.epochs = 50;
    t.plg.theta = 0.55;
  } else if (name == "xd-like") {
    t.learning_rate = 1e-4;
    t.epochs = 20;
    t.plg.theta = 0.35;
  } else if (name == "synthetic") {
    // ucf-like optimization; softness and frame noise sized for 64-frame clips.
    t.learning_rate = 1e-3;
    t.epochs = 50;
    t.plg.theta = 0.55;
    t.tcsal.softness = 8.0;
    cfg.synthetic.noise = 0.4;
  } else {
    throw ConfigError("unknown preset: " + std::string(name));
  }
  return cfg;
}

std::string to_string(prompt::NvpMode mode) {
  switch (mode) {
    case prompt::NvpMode::Off: return "off";
    case prompt::NvpMode::FrameAverage: return "frame-average";
    case prompt::NvpMode::SimilarityAggregate: return "similarity-aggregate";
  }
  return "?";
}

std::string to_string(tcsal::TemporalMode mode) {
  return mode == tcsal::TemporalMode::AdaptiveSpan ? "tcsal" : "plain-encoder";
}

std::string to_string(plg::LabelPolarity p) {
  return p == plg::LabelPolarity::AnomalyOriented ? "anomaly" : "literal";
}

prompt::NvpMode parse_nvp_mode(std::string_view s) {
  if (s == "off") return prompt::NvpMode::Off;
  if (s == "frame-average") return prompt::NvpMode::FrameAverage;
  if (s == "similarity-aggregate") return prompt::NvpMode::SimilarityAggregate;
  throw ConfigError("nvp must be off, frame-average or similarity-aggregate, got " + std::string(s));
}

tcsal::TemporalMode parse_temporal_mode(std::string_view s) {
  if (s == "tcsal") return tcsal::TemporalMode::AdaptiveSpan;
  if (s == "plain-encoder") return tcsal::TemporalMode::PlainEncoder;
  throw ConfigError("temporal must be tcsal or plain-encoder, got " + std::string(s));
}

plg::LabelPolarity parse_polarity(std::string_view s) {
  if (s == "anomaly") return plg::LabelPolarity::AnomalyOriented;
  if (s == "literal") return plg::LabelPolarity::Literal;
  throw ConfigError("label_polarity must be anomaly or literal, got " + std::string(s));
}

bool parse_on_off(std::string_view s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigError("expected on or off, got " + std::string(s));
}

void apply_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  if (j.contains("preset")) {
    if (!j.at("preset").is_string()) throw ConfigError("preset must be a string");
    cfg = preset_config(j.at("preset").get<std::string>());
  }
  TrainConfig& t = cfg.train;
  data::SyntheticConfig& s = cfg.synthetic;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "preset") continue;
      else if (key == "seed") { t.seed = value.get<std::uint64_t>(); s.seed = t.seed; }
      else if (key == "learning_rate") t.learning_rate = value.get<double>();
      else if (key == "weight_decay") t.weight_decay = value.get<double>();
      else if (key == "epochs") t.epochs = value.get<int>();
      else if (key == "batch_normal") t.batch_normal = value.get<int>();
      else if (key == "batch_abnormal") t.batch_abnormal = value.get<int>();
      else if (key == "alpha") t.plg.alpha = value.get<double>();
      else if (key == "theta") t.plg.theta = value.get<double>();
      else if (key == "label_polarity") t.plg.polarity = parse_polarity(value.get<std::string>());
      else if (key == "normality_guidance") t.normality_guidance = parse_on_off(value.get<std::string>());
      else if (key == "lambda1") t.weights.lambda1 = value.get<double>();
      else if (key == "lambda2") t.weights.lambda2 = value.get<double>();
      else if (key == "loss_rank_normal") t.toggles.rank_normal = value.get<bool>();
      else if (key == "loss_rank_abnormal") t.toggles.rank_abnormal = value.get<bool>();
      else if (key == "loss_dil") t.toggles.dil = value.get<bool>();
      else if (key == "context_length") t.context_length = value.get<int>();
      else if (key == "nvp") t.nvp = parse_nvp_mode(value.get<std::string>());
      else if (key == "nvp_ffn_multiplier") t.nvp_ffn_multiplier = value.get<int>();
      else if (key == "temporal") t.tcsal.mode = parse_temporal_mode(value.get<std::string>());
      else if (key == "layers") t.tcsal.layers = value.get<int>();
      else if (key == "heads") t.tcsal.heads = value.get<int>();
      else if (key == "softness") t.tcsal.softness = value.get<double>();
      else if (key == "tcsal_ffn_multiplier") t.tcsal.ffn_multiplier = value.get<int>();
      else if (key == "dataset_name") s.name = value.get<std::string>();
      else if (key == "classes") s.num_classes = value.get<int>();
      else if (key == "dim") s.dim = value.get<int>();
      else if (key == "frames") s.frames = value.get<int>();
      else if (key == "train_videos") s.train_videos = value.get<int>();
      else if (key == "test_videos") s.test_videos = value.get<int>();
      else if (key == "segment_min") s.segment_min = value.get<double>();
      else if (key == "segment_max") s.segment_max = value.get<double>();
      else if (key == "separation") s.separation = value.get<double>();
      else if (key == "noise") s.noise = value.get<double>();
      else if (key == "text_alignment") s.text_alignment = value.get<double>();
      else throw ConfigError("unknown configuration key: " + key);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + key + "': " + e.what());
    }
  }
  validate(t);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig cfg = preset_config("ucf-like");
  apply_json(cfg, j);
  return cfg;
}

json to_json(const TrainConfig& t) {
  return json{
      {"preset", t.preset},
      {"seed", t.seed},
      {"learning_rate", t.learning_rate},
      {"weight_decay", t.weight_decay},
      {"epochs", t.epochs},
      {"batch_normal", t.batch_normal},
      {"batch_abnormal", t.batch_abnormal},
      {"alpha", t.plg.alpha},
      {"theta", t.plg.theta},
      {"label_polarity", to_string(t.plg.polarity)},
      {"normality_guidance", t.normality_guidance ? "on" : "off"},
      {"lambda1", t.weights.lambda1},
      {"lambda2", t.weights.lambda2},
      {"loss_rank_normal", t.toggles.rank_normal},
      {"loss_rank_abnormal", t.toggles.rank_abnormal},
      {"loss_dil", t.toggles.dil},
      {"context_length", t.context_length},
      {"nvp", to_string(t.nvp)},
      {"nvp_ffn_multiplier", t.nvp_ffn_multiplier},
      {"temporal", to_string(t.tcsal.mode)},
      {"layers", t.tcsal.layers},
      {"heads", t.tcsal.heads},
      {"softness", t.tcsal.softness},
      {"tcsal_ffn_multiplier", t.tcsal.ffn_multiplier},
  };
}

json to_json(const data::SyntheticConfig& s) {
  return json{
      {"dataset_name", s.name},
      {"classes", s.num_classes},
      {"dim", s.dim},
      {"frames", s.frames},
      {"train_videos", s.train_videos},
      {"test_videos", s.test_videos},
      {"segment_min", s.segment_min},
      {"segment_max", s.segment_max},
      {"separation", s.separation},
      {"noise", s.noise},
      {"text_alignment", s.text_alignment},
      {"seed", s.seed},
  };
}

std::string config_hash(const TrainConfig& cfg) {
  // nlohmann::json objects iterate keys in sorted order, so dump() is canonical.
  const std::uint64_t h = fnv1a64(to_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tpwng
