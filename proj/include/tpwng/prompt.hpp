#pragma once

// Learnable text prompts and the normality visual prompt.
//
// The frozen text transformer is replaced by mean-pooling over the prompt
// token sequence followed by the learnable D x D projection, so the
// trainable surface is: shared context vectors, positional embeddings and the
// projection.

#include "tpwng/autodiff.hpp"
#include "tpwng/random.hpp"

#include <vector>

namespace tpwng::prompt {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

class PromptBank {
 public:
  /// `class_tokens` is k x D, row i for class index i + 1 (normal last).
  PromptBank(Matrix class_tokens, int context_length, Rng& rng);

  int num_classes() const { return static_cast<int>(tokens_.rows()); }
  int context_length() const { return static_cast<int>(contexts.rows()); }
  Eigen::Index dim() const { return tokens_.cols(); }
  const Matrix& class_tokens() const { return tokens_; }

  std::vector<Parameter*> parameters() { return {&contexts, &positions, &projection}; }

  Parameter contexts;    // l x D, shared by every class
  Parameter positions;   // (l + 1) x D
  Parameter projection;  // D x D

 private:
  Matrix tokens_;  // frozen
};

/// T = projection * mean(ctx_1 + pos_1, ..., ctx_l + pos_l, token + pos_{l+1}),
/// returned as a 1 x D row. `class_index` is 1-based.
Var encode_class(Tape& tape, PromptBank& bank, int class_index);

/// k x D; row i equals encode_class(bank, i + 1).
Var build_embedding_set(Tape& tape, PromptBank& bank);

/// Transformer feed-forward block mapping 1 x 2D to 1 x D.
class FfnBlock {
 public:
  FfnBlock(Eigen::Index dim, Eigen::Index hidden, Rng& rng);

  Var forward(Tape& tape, const Var& x);
  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }

  Parameter w1, b1, w2, b2;
};

enum class NvpMode {
  Off,                  // use the raw normal text embedding
  FrameAverage,         // Q = unweighted mean of normal frames
  SimilarityAggregate,  // Q = softmax(X T^T)^T X
};

/// Normality visual prompt of one normal video (`normal_frames` is F x D).
Var compute_nvp(Tape& tape, const Var& normal_text, const Matrix& normal_frames,
                NvpMode mode = NvpMode::SimilarityAggregate);

/// FFN(concat(T, Q)) + T.
Var enhance_normal_text(Tape& tape, const Var& normal_text, const Var& nvp, FfnBlock& ffn);

}  // namespace tpwng::prompt
