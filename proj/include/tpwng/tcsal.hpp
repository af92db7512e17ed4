#pragma once

// Temporal context self-adaptive learning: a causal transformer encoder whose
// per-head attention span is predicted from the input, followed by the frame
// classifier.
//
// Each head at each layer computes a span z[t] = F * sigmoid(<C, x_t> + b)
// for every query frame t and weights the past with the soft ramp
//
//   chi_z(h) = min(max((R + z - h) / R, 0), 1),   h = t - r >= 0,
//
// so frames within distance z are fully visible, visibility decays linearly
// over the next R frames, and anything farther is masked out. The current
// frame (h = 0) is always visible.

#include "tpwng/autodiff.hpp"
#include "tpwng/random.hpp"

#include <span>
#include <vector>

namespace tpwng::tcsal {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using ad::Vector;

double soft_mask(double h, double z, double softness);

/// z[t] = F * sigmoid(<span_weight, frames.row(t)> + span_bias), F = frames.rows().
Vector adaptive_span(const Matrix& frames, const Eigen::RowVectorXd& span_weight, double span_bias);

/// Attention weights for one head of one video. `beta` is F x F query-key
/// scores. Row t is supported on r <= t and weighted by chi_{z[t]}(t - r).
Matrix span_attention_weights(const Matrix& beta, const Vector& z, double softness);

/// Unmasked causal softmax over r <= t.
Matrix causal_attention_weights(const Matrix& beta);

/// Unmasked softmax over every r (bidirectional).
Matrix full_attention_weights(const Matrix& beta);

/// Contiguous rows of a stacked batch that belong to one video.
struct Segment {
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

enum class TemporalMode {
  AdaptiveSpan,  // causal, span-masked attention
  PlainEncoder,  // bidirectional full-context attention, no mask
};

/// Multi-head attention over a stack of videos. q, k, v are N x D with
/// N = sum of segment lengths; heads split D evenly. `span` is N x heads and
/// is ignored (may be invalid) in PlainEncoder mode. Scores are scaled by
/// 1 / sqrt(D / heads).
Var masked_attention(const Var& q, const Var& k, const Var& v, const Var& span,
                     std::span<const Segment> segments, int heads, double softness,
                     TemporalMode mode);

struct TcsalConfig {
  int layers = 4;
  int heads = 4;
  double softness = 256.0;  // R
  int ffn_multiplier = 2;
  TemporalMode mode = TemporalMode::AdaptiveSpan;
  double ln_eps = 1e-5;
};

class EncoderLayer {
 public:
  EncoderLayer(int index, Eigen::Index dim, const TcsalConfig& cfg, Rng& rng);

  /// `frame_counts` is N x 1 holding the length F of each row's video.
  Var forward(Tape& tape, const Var& x, std::span<const Segment> segments,
              const Matrix& frame_counts, const TcsalConfig& cfg);

  std::vector<Parameter*> parameters();

  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln1_gain, ln1_bias;
  Parameter ff_w1, ff_b1, ff_w2, ff_b2;
  Parameter ln2_gain, ln2_bias;
  Parameter span_weight;  // heads x D
  Parameter span_bias;    // 1 x heads
};

class TcsalStack {
 public:
  TcsalStack(Eigen::Index dim, const TcsalConfig& cfg, Rng& rng);

  const TcsalConfig& config() const { return cfg_; }
  Eigen::Index dim() const { return dim_; }

  /// Encodes a stack of videos; output has the same shape as `x`.
  Var forward(Tape& tape, const Var& x, std::span<const Segment> segments);

  std::vector<Parameter*> parameters();

 private:
  TcsalConfig cfg_;
  Eigen::Index dim_;
  std::vector<EncoderLayer> layers_;
};

/// eta[j] = sigmoid(w . LayerNorm(x_j) + c).
class FrameClassifier {
 public:
  FrameClassifier(Eigen::Index dim, Rng& rng);

  Var forward(Tape& tape, const Var& x);  // N x 1 scores in (0, 1)
  std::vector<Parameter*> parameters() { return {&ln_gain, &ln_bias, &weight, &bias}; }

  Parameter ln_gain, ln_bias, weight, bias;
  double ln_eps = 1e-5;
};

/// Row offsets of videos with the given lengths stacked in order.
std::vector<Segment> make_segments(std::span<const Eigen::Index> lengths);

}  // namespace tpwng::tcsal
