#include "tpwng/synthetic.hpp"

#include "tpwng/errors.hpp"
#include "tpwng/feature_io.hpp"
#include "tpwng/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tpwng::data {

void validate(const SyntheticConfig& cfg) {
  if (cfg.num_classes < 2) throw ContractError("synthetic: num_classes must be >= 2");
  if (cfg.dim < 1 || cfg.frames < 1) throw ContractError("synthetic: dim and frames must be >= 1");
  if (cfg.train_videos < 2 || cfg.test_videos < 2) {
    throw ContractError("synthetic: each split needs at least one normal and one abnormal video");
  }
  if (!(cfg.segment_min > 0.0 && cfg.segment_min <= cfg.segment_max && cfg.segment_max <= 1.0)) {
    throw ContractError("synthetic: need 0 < segment_min <= segment_max <= 1");
  }
  if (!(cfg.noise > 0.0)) throw ContractError("synthetic: noise must be > 0");
  if (!(cfg.text_alignment >= 0.0 && cfg.text_alignment < 1.0)) {
    throw ContractError("synthetic: text_alignment must lie in [0, 1)");
  }
  if (cfg.separation < 0.0 || cfg.separation > 2.0) {
    throw ContractError("synthetic: separation must lie in [0, 2] for unit vectors");
  }
}

namespace {

std::vector<std::string> class_names(int k) {
  std::vector<std::string> names;
  for (int c = 1; c < k; ++c) names.push_back("anomaly-" + std::to_string(c));
  names.push_back("normal");
  return names;
}

Matrix draw_prototypes(const SyntheticConfig& cfg, const Matrix& tokens, Rng& rng) {
  const double a = cfg.text_alignment;
  const double b = std::sqrt(1.0 - a * a);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix protos(cfg.num_classes, cfg.dim);
  constexpr int kMaxAttempts = 100000;
  for (int c = 0; c < cfg.num_classes; ++c) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == kMaxAttempts) {
        throw ContractError("synthetic: cannot place prototypes at the requested separation");
      }
      for (int d = 0; d < cfg.dim; ++d) protos(c, d) = normal(rng);
      double n = protos.row(c).norm();
      if (n == 0.0) continue;
      protos.row(c) = a * tokens.row(c) + (b / n) * protos.row(c);
      n = protos.row(c).norm();
      if (n == 0.0) continue;
      protos.row(c) /= n;
      bool ok = true;
      for (int o = 0; o < c && ok; ++o) ok = (protos.row(c) - protos.row(o)).norm() >= cfg.separation;
      if (ok) break;
    }
  }
  return protos;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& out_dir) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, "synthetic"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticDataset ds;
  const auto names = class_names(cfg.num_classes);
  ds.prototypes = draw_prototypes(cfg, class_token_embeddings(names, kTextEncoderSeed, cfg.dim), rng);
  const int k = cfg.num_classes;

  DatasetManifest& m = ds.manifest;
  m.name = cfg.name;
  m.dim = cfg.dim;
  m.num_classes = k;
  m.classes = names;
  m.base_dir = out_dir;

  std::filesystem::create_directories(out_dir / "features");

  auto emit_split = [&](const std::string& split, int count) {
    const int normals = count / 2;
    for (int v = 0; v < count; ++v) {
      const bool abnormal = v >= normals;
      Matrix frames(cfg.frames, cfg.dim);
      std::vector<std::uint8_t> truth(cfg.frames, 0);
      int cls = k;
      for (int f = 0; f < cfg.frames; ++f) {
        for (int d = 0; d < cfg.dim; ++d) frames(f, d) = ds.prototypes(k - 1, d) + cfg.noise * normal(rng);
      }
      if (abnormal) {
        cls = 1 + static_cast<int>(unit(rng) * (k - 1));
        cls = std::min(cls, k - 1);
        const double frac = cfg.segment_min + (cfg.segment_max - cfg.segment_min) * unit(rng);
        const int len = std::clamp(static_cast<int>(std::lround(frac * cfg.frames)), 1, cfg.frames);
        const int start = std::min(static_cast<int>(unit(rng) * (cfg.frames - len + 1)), cfg.frames - len);
        for (int f = start; f < start + len; ++f) {
          truth[f] = 1;
          for (int d = 0; d < cfg.dim; ++d) frames(f, d) = ds.prototypes(cls - 1, d) + cfg.noise * normal(rng);
        }
      }
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04d_%s.tpf", split.c_str(), v, abnormal ? "a" : "n");
      const std::string rel = std::string("features/") + name;
      save_features(out_dir / rel, frames);

      VideoEntry e;
      e.path = rel;
      e.label = abnormal ? 1 : 0;
      e.class_index = cls;
      e.split = split;
      if (split == "test") e.frame_truth = std::move(truth);
      m.videos.push_back(std::move(e));
    }
  };
  emit_split("train", cfg.train_videos);
  emit_split("test", cfg.test_videos);

  save_manifest(m, out_dir / "manifest.json");
  return ds;
}

}  // namespace tpwng::data
