#include "tpwng/prompt.hpp"

#include "tpwng/errors.hpp"

#include <cmath>

namespace tpwng::prompt {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace

PromptBank::PromptBank(Matrix class_tokens, int context_length, Rng& rng)
    : tokens_(std::move(class_tokens)) {
  if (context_length < 1) throw ContractError("prompt context length must be >= 1");
  if (tokens_.rows() < 2) throw ContractError("prompt bank needs at least two classes");
  const Eigen::Index d = tokens_.cols();
  contexts = Parameter("prompt.contexts", gaussian(context_length, d, 0.02, rng));
  positions = Parameter("prompt.positions", gaussian(context_length + 1, d, 0.02, rng));
  projection = Parameter("prompt.projection",
                         Matrix(Matrix::Identity(d, d) + gaussian(d, d, 0.02, rng)));
}

Var encode_class(Tape& tape, PromptBank& bank, int class_index) {
  if (class_index < 1 || class_index > bank.num_classes()) {
    throw ContractError("class index " + std::to_string(class_index) + " outside [1, " +
                        std::to_string(bank.num_classes()) + "]");
  }
  const int l = bank.context_length();
  Var pos = tape.param(bank.positions);
  Var ctx = add(tape.param(bank.contexts), slice_rows(pos, 0, l));
  Var tok = add(tape.constant(bank.class_tokens().row(class_index - 1)), slice_rows(pos, l, 1));
  const Var seq_parts[] = {ctx, tok};
  Var seq = concat_rows(seq_parts);
  Var pooled = matmul(tape.constant(Matrix::Constant(1, l + 1, 1.0 / (l + 1))), seq);
  return matmul(pooled, transpose(tape.param(bank.projection)));
}

Var build_embedding_set(Tape& tape, PromptBank& bank) {
  std::vector<Var> rows;
  rows.reserve(bank.num_classes());
  for (int c = 1; c <= bank.num_classes(); ++c) rows.push_back(encode_class(tape, bank, c));
  return concat_rows(rows);
}

FfnBlock::FfnBlock(Eigen::Index dim, Eigen::Index hidden, Rng& rng)
    : w1("nvp.ffn.w1", gaussian(2 * dim, hidden, 1.0 / std::sqrt(2.0 * dim), rng)),
      b1("nvp.ffn.b1", Matrix::Zero(1, hidden)),
      w2("nvp.ffn.w2", gaussian(hidden, dim, 0.02, rng)),
      b2("nvp.ffn.b2", Matrix::Zero(1, dim)) {}

Var FfnBlock::forward(Tape& tape, const Var& x) {
  Var h = relu(add(matmul(x, tape.param(w1)), tape.param(b1)));
  return add(matmul(h, tape.param(w2)), tape.param(b2));
}

Var compute_nvp(Tape& tape, const Var& normal_text, const Matrix& normal_frames, NvpMode mode) {
  if (normal_frames.rows() < 1) throw ContractError("normality visual prompt needs F >= 1");
  if (normal_frames.cols() != normal_text.cols()) {
    throw DimensionError("normality visual prompt: frame and text dimensions differ");
  }
  switch (mode) {
    case NvpMode::FrameAverage:
      return tape.constant(normal_frames.colwise().mean());
    case NvpMode::SimilarityAggregate: {
      Var x = tape.constant(normal_frames);
      Var sim = matmul(normal_text, transpose(x));  // 1 x F
      return matmul(softmax(sim, ad::Axis::Cols), x);
    }
    case NvpMode::Off:
      break;
  }
  throw ContractError("compute_nvp called with NvpMode::Off");
}

Var enhance_normal_text(Tape& tape, const Var& normal_text, const Var& nvp, FfnBlock& ffn) {
  const Var parts[] = {normal_text, nvp};
  return add(ffn.forward(tape, concat_cols(parts)), normal_text);
}

}  // namespace tpwng::prompt
