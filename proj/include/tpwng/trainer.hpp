#pragma once

#include "tpwng/config.hpp"
#include "tpwng/losses.hpp"
#include "tpwng/manifest.hpp"
#include "tpwng/model.hpp"
#include "tpwng/plg.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace tpwng {

using data::FeatureSequence;

struct Batch {
  std::vector<std::size_t> normal;    // indices into the normal pool
  std::vector<std::size_t> abnormal;  // indices into the abnormal pool
};

/// Draws fixed-composition batches from two pools. Each pool is walked
/// through a random permutation; when it runs out mid-batch it is reshuffled
/// and sampling wraps around.
class BatchSampler {
 public:
  BatchSampler(std::size_t normal_pool, std::size_t abnormal_pool, int batch_normal,
               int batch_abnormal, std::uint64_t seed);

  Batch next();

  /// Steps needed for the larger pool to be visited once.
  int steps_per_epoch() const;

 private:
  struct Pool {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  std::size_t draw(Pool& pool);

  Pool normal_, abnormal_;
  int batch_normal_, batch_abnormal_;
  Rng rng_;
};

/// Adam with decoupled weight decay.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<ad::Parameter*> params, Options opt);

  /// Applies one update from the accumulated gradients.
  void step();
  void zero_grad();
  long steps() const { return t_; }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<ad::Matrix> m_, v_;
  Options opt_;
  long t_ = 0;
};

/// One optimization step on a batch. Pseudo-labels are regenerated from the
/// current parameters before the classifier loss is formed. Throws
/// NumericError (before any parameter update) if anything turns non-finite.
loss::LossReport train_step(Model& model, const TrainConfig& cfg,
                            std::span<const FeatureSequence* const> normals,
                            std::span<const FeatureSequence* const> abnormals, Adam& opt);

/// Loss terms of one batch without updating anything.
loss::LossReport batch_losses(Model& model, const TrainConfig& cfg,
                              std::span<const FeatureSequence* const> normals,
                              std::span<const FeatureSequence* const> abnormals);

struct StepLog {
  int epoch = 0;
  int step = 0;
  loss::LossReport losses;
};

using StepCallback = std::function<void(const StepLog&)>;

/// Full training loop over `videos` (mixed normal and abnormal).
std::vector<StepLog> train(Model& model, const TrainConfig& cfg, const std::vector<FeatureSequence>& videos,
                           const StepCallback& on_step = nullptr);

/// Frame scores from the inference path (encoder + classifier only).
std::vector<ad::Vector> score_videos(Model& model, const std::vector<FeatureSequence>& videos);

struct VideoCurve {
  std::string video_id;
  ad::Vector scores;
  std::vector<std::uint8_t> truth;
};

struct EvalResult {
  std::optional<double> auc;  // nullopt: truth is all one class
  std::optional<double> ap;
  std::size_t num_frames = 0;
  std::vector<VideoCurve> curves;
};

/// Frame-level AUC and AP over all frames of all videos. Every video must
/// carry frame truth.
EvalResult evaluate(Model& model, const std::vector<FeatureSequence>& videos);

/// Pseudo-labels the current parameters assign to `videos`. The i-th abnormal
/// video takes its normality visual prompt from the (i mod n)-th of the n
/// normal videos in `videos`, which must include one when NVP is enabled.
std::vector<plg::PseudoLabels> infer_pseudo_labels(Model& model, const TrainConfig& cfg,
                                                   const std::vector<FeatureSequence>& videos);

}  // namespace tpwng
