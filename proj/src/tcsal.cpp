#include "tpwng/tcsal.hpp"

#include "tpwng/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace tpwng::tcsal {

double soft_mask(double h, double z, double softness) {
  if (h <= z) return 1.0;
  if (h >= softness + z) return 0.0;
  return std::min(std::max((softness + z - h) / softness, 0.0), 1.0);
}

Vector adaptive_span(const Matrix& frames, const Eigen::RowVectorXd& span_weight, double span_bias) {
  if (frames.cols() != span_weight.size()) throw DimensionError("adaptive_span: dimension mismatch");
  const double f = static_cast<double>(frames.rows());
  Vector logits = frames * span_weight.transpose();
  return logits.unaryExpr([f, span_bias](double x) {
    const double a = x + span_bias;
    const double s = a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
    return f * s;
  });
}

namespace {

// soft_mask over a row of distances.
Eigen::ArrayXd mask_row(const Eigen::ArrayXd& h, double z, double softness) {
  const Eigen::ArrayXd ramp = ((softness + z - h) / softness).max(0.0).min(1.0);
  return (h <= z).select(1.0, (h >= softness + z).select(0.0, ramp));
}

// Weights of one head for one video. `z` is null for unmasked attention (m = 1).
// omega(t, r) = m e / S and p(t, r) = e / S with e = exp(beta - c) and
// S = sum_r m e, the form the backward pass consumes. Entries with m = 0 get
// e = 0 so a far, masked-out score can never overflow.
void head_weights(const Matrix& beta, const double* z, Eigen::Index z_stride, double softness,
                  bool causal, Matrix& omega, Matrix& p) {
  const Eigen::Index f = beta.rows();
  omega.setZero(f, f);
  p.setZero(f, f);
  const Eigen::ArrayXd index = Eigen::ArrayXd::LinSpaced(f, 0.0, static_cast<double>(f - 1));
  Eigen::ArrayXd m, e;
  for (Eigen::Index t = 0; t < f; ++t) {
    const Eigen::Index end = causal ? t + 1 : f;
    const auto b = beta.row(t).head(end).transpose().array();
    if (z) {
      // distance h = t - r
      m = mask_row(static_cast<double>(t) - index.head(end), z[t * z_stride], softness);
    } else {
      m.setOnes(end);
    }
    const double c = (m > 0.0).select(b, -std::numeric_limits<double>::infinity()).maxCoeff();
    e = (b - c).exp();
    e = (m > 0.0).select(e, 0.0);
    const Eigen::ArrayXd w = m * e;
    const double s = w.sum();
    if (!(s > 0.0)) throw ContractError("attention row has no visible frame");
    omega.row(t).head(end) = (w / s).transpose();
    p.row(t).head(end) = (e / s).transpose();
  }
}

}  // namespace

Matrix span_attention_weights(const Matrix& beta, const Vector& z, double softness) {
  if (beta.rows() != beta.cols() || z.size() != beta.rows()) {
    throw DimensionError("span_attention_weights: expected F x F scores and F spans");
  }
  if (softness < 1.0) throw ContractError("softness R must be >= 1");
  Matrix omega, p;
  head_weights(beta, z.data(), 1, softness, true, omega, p);
  return omega;
}

Matrix causal_attention_weights(const Matrix& beta) {
  if (beta.rows() != beta.cols()) throw DimensionError("causal_attention_weights: expected F x F scores");
  Matrix omega, p;
  head_weights(beta, nullptr, 0, 1.0, true, omega, p);
  return omega;
}

Matrix full_attention_weights(const Matrix& beta) {
  if (beta.rows() != beta.cols()) throw DimensionError("full_attention_weights: expected F x F scores");
  Matrix omega, p;
  head_weights(beta, nullptr, 0, 1.0, false, omega, p);
  return omega;
}

Var masked_attention(const Var& q, const Var& k, const Var& v, const Var& span,
                     std::span<const Segment> segments, int heads, double softness,
                     TemporalMode mode) {
  const Eigen::Index n = q.rows();
  const Eigen::Index d = q.cols();
  if (k.rows() != n || v.rows() != n || k.cols() != d || v.cols() != d) {
    throw DimensionError("masked_attention: q, k, v shapes differ");
  }
  if (heads < 1 || d % heads != 0) throw DimensionError("masked_attention: D not divisible by heads");
  const bool masked = mode == TemporalMode::AdaptiveSpan;
  if (masked) {
    if (span.rows() != n || span.cols() != heads) {
      throw DimensionError("masked_attention: span must be N x heads");
    }
    if (softness < 1.0) throw ContractError("softness R must be >= 1");
  }
  Eigen::Index covered = 0;
  for (const auto& s : segments) {
    if (s.offset != covered || s.length < 1) throw ContractError("masked_attention: segments must tile the rows");
    covered += s.length;
  }
  if (covered != n) throw ContractError("masked_attention: segments do not cover every row");

  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t blocks = segments.size() * static_cast<std::size_t>(heads);
  auto omegas = std::make_shared<std::vector<Matrix>>(blocks);
  auto probs = std::make_shared<std::vector<Matrix>>(blocks);

  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out(n, d);
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const auto [off, f] = segments[si];
    for (int h = 0; h < heads; ++h) {
      const std::size_t b = si * heads + h;
      const Matrix beta = qv.block(off, h * dh, f, dh) * kv.block(off, h * dh, f, dh).transpose() * scale;
      const double* z = masked ? span.value().data() + off * heads + h : nullptr;
      head_weights(beta, z, heads, softness, masked, (*omegas)[b], (*probs)[b]);
      out.block(off, h * dh, f, dh).noalias() = (*omegas)[b] * vv.block(off, h * dh, f, dh);
    }
  }

  std::vector<Var> inputs = {q, k, v};
  if (masked) inputs.push_back(span);
  std::vector<Segment> segs(segments.begin(), segments.end());
  return q.tape().record(
      masked ? "span_attention" : "full_attention", std::move(out), inputs,
      [q, k, v, span, segs, heads, softness, masked, dh, scale, omegas, probs](const Matrix& g) {
        const Eigen::Index n = q.rows();
        const Eigen::Index d = q.cols();
        Matrix gq = Matrix::Zero(n, d);
        Matrix gk = Matrix::Zero(n, d);
        Matrix gv = Matrix::Zero(n, d);
        Matrix gz;
        if (masked) gz = Matrix::Zero(n, heads);
        const Eigen::Index longest =
            std::max_element(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
              return a.length < b.length;
            })->length;
        const Eigen::ArrayXd index = Eigen::ArrayXd::LinSpaced(longest, 0.0, static_cast<double>(longest - 1));
        for (std::size_t si = 0; si < segs.size(); ++si) {
          const auto [off, f] = segs[si];
          for (int h = 0; h < heads; ++h) {
            const std::size_t b = si * heads + h;
            const Matrix& omega = (*omegas)[b];
            const Matrix& p = (*probs)[b];
            const auto gs = g.block(off, h * dh, f, dh);
            const Matrix d_omega = gs * v.value().block(off, h * dh, f, dh).transpose();
            gv.block(off, h * dh, f, dh).noalias() = omega.transpose() * gs;

            Matrix d_beta = Matrix::Zero(f, f);
            for (Eigen::Index t = 0; t < f; ++t) {
              const Eigen::Index end = masked ? t + 1 : f;
              const double dot = d_omega.row(t).dot(omega.row(t));
              const Eigen::ArrayXd centered = d_omega.row(t).head(end).transpose().array() - dot;
              d_beta.row(t).head(end) = (centered * omega.row(t).head(end).transpose().array()).transpose();
              if (masked) {
                const double z = span.value()(off + t, h);
                const Eigen::ArrayXd ramp = mask_row(static_cast<double>(t) - index.head(end), z, softness);
                gz(off + t, h) =
                    ((ramp > 0.0 && ramp < 1.0)
                         .select(centered * p.row(t).head(end).transpose().array(), 0.0))
                        .sum() /
                    softness;
              }
            }
            gq.block(off, h * dh, f, dh).noalias() =
                d_beta * k.value().block(off, h * dh, f, dh) * scale;
            gk.block(off, h * dh, f, dh).noalias() =
                d_beta.transpose() * q.value().block(off, h * dh, f, dh) * scale;
          }
        }
        q.accumulate(gq);
        k.accumulate(gk);
        v.accumulate(gv);
        if (masked) span.accumulate(gz);
      });
}

// ---------------------------------------------------------------------------

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Var affine(Tape& tape, const Var& x, Parameter& w, Parameter& b) {
  return add(matmul(x, tape.param(w)), tape.param(b));
}

Var normalize(Tape& tape, const Var& x, Parameter& gain, Parameter& bias, double eps) {
  return add(mul(layer_norm(x, eps), tape.param(gain)), tape.param(bias));
}

}  // namespace

EncoderLayer::EncoderLayer(int index, Eigen::Index dim, const TcsalConfig& cfg, Rng& rng) {
  if (cfg.heads < 1 || dim % cfg.heads != 0) {
    throw ContractError("TCSAL: dimension must be divisible by the head count");
  }
  const std::string p = "tcsal.layer" + std::to_string(index) + ".";
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  const Eigen::Index hidden = dim * cfg.ffn_multiplier;
  wq = Parameter(p + "wq", gaussian(dim, dim, sd, rng));
  bq = Parameter(p + "bq", Matrix::Zero(1, dim));
  wk = Parameter(p + "wk", gaussian(dim, dim, sd, rng));
  bk = Parameter(p + "bk", Matrix::Zero(1, dim));
  wv = Parameter(p + "wv", gaussian(dim, dim, sd, rng));
  bv = Parameter(p + "bv", Matrix::Zero(1, dim));
  wo = Parameter(p + "wo", gaussian(dim, dim, sd, rng));
  bo = Parameter(p + "bo", Matrix::Zero(1, dim));
  ln1_gain = Parameter(p + "ln1.gain", Matrix::Ones(1, dim));
  ln1_bias = Parameter(p + "ln1.bias", Matrix::Zero(1, dim));
  ff_w1 = Parameter(p + "ff.w1", gaussian(dim, hidden, sd, rng));
  ff_b1 = Parameter(p + "ff.b1", Matrix::Zero(1, hidden));
  ff_w2 = Parameter(p + "ff.w2", gaussian(hidden, dim, 1.0 / std::sqrt(static_cast<double>(hidden)), rng));
  ff_b2 = Parameter(p + "ff.b2", Matrix::Zero(1, dim));
  ln2_gain = Parameter(p + "ln2.gain", Matrix::Ones(1, dim));
  ln2_bias = Parameter(p + "ln2.bias", Matrix::Zero(1, dim));
  span_weight = Parameter(p + "span.weight", gaussian(cfg.heads, dim, 0.02, rng));
  span_bias = Parameter(p + "span.bias", Matrix::Zero(1, cfg.heads));
}

std::vector<Parameter*> EncoderLayer::parameters() {
  return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln1_gain, &ln1_bias, &ff_w1, &ff_b1,
          &ff_w2, &ff_b2, &ln2_gain, &ln2_bias, &span_weight, &span_bias};
}

Var EncoderLayer::forward(Tape& tape, const Var& x, std::span<const Segment> segments,
                          const Matrix& frame_counts, const TcsalConfig& cfg) {
  Var q = affine(tape, x, wq, bq);
  Var k = affine(tape, x, wk, bk);
  Var v = affine(tape, x, wv, bv);
  Var span;
  if (cfg.mode == TemporalMode::AdaptiveSpan) {
    Var logits = add(matmul(x, transpose(tape.param(span_weight))), tape.param(span_bias));
    span = mul(sigmoid(logits), tape.constant(frame_counts));
  }
  Var att = masked_attention(q, k, v, span, segments, cfg.heads, cfg.softness, cfg.mode);
  Var h = normalize(tape, add(x, affine(tape, att, wo, bo)), ln1_gain, ln1_bias, cfg.ln_eps);
  Var ff = affine(tape, relu(affine(tape, h, ff_w1, ff_b1)), ff_w2, ff_b2);
  return normalize(tape, add(h, ff), ln2_gain, ln2_bias, cfg.ln_eps);
}

TcsalStack::TcsalStack(Eigen::Index dim, const TcsalConfig& cfg, Rng& rng) : cfg_(cfg), dim_(dim) {
  if (cfg.layers < 1) throw ContractError("TCSAL needs at least one layer");
  if (cfg.softness < 1.0) throw ContractError("softness R must be >= 1");
  if (cfg.ffn_multiplier < 1) throw ContractError("TCSAL feed-forward multiplier must be >= 1");
  layers_.reserve(cfg.layers);
  for (int i = 0; i < cfg.layers; ++i) layers_.emplace_back(i, dim, cfg, rng);
}

std::vector<Parameter*> TcsalStack::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    auto p = layer.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Var TcsalStack::forward(Tape& tape, const Var& x, std::span<const Segment> segments) {
  if (x.cols() != dim_) throw DimensionError("TCSAL: input dimension mismatch");
  Matrix counts(x.rows(), 1);
  for (const auto& s : segments) counts.middleRows(s.offset, s.length).setConstant(static_cast<double>(s.length));
  Var h = x;
  for (auto& layer : layers_) h = layer.forward(tape, h, segments, counts, cfg_);
  return h;
}

FrameClassifier::FrameClassifier(Eigen::Index dim, Rng& rng)
    : ln_gain("classifier.ln.gain", Matrix::Ones(1, dim)),
      ln_bias("classifier.ln.bias", Matrix::Zero(1, dim)),
      weight("classifier.weight", gaussian(dim, 1, 0.02, rng)),
      bias("classifier.bias", Matrix::Zero(1, 1)) {}

Var FrameClassifier::forward(Tape& tape, const Var& x) {
  Var h = normalize(tape, x, ln_gain, ln_bias, ln_eps);
  return sigmoid(add(matmul(h, tape.param(weight)), tape.param(bias)));
}

std::vector<Segment> make_segments(std::span<const Eigen::Index> lengths) {
  std::vector<Segment> out;
  out.reserve(lengths.size());
  Eigen::Index at = 0;
  for (Eigen::Index len : lengths) {
    out.push_back({at, len});
    at += len;
  }
  return out;
}

}  // namespace tpwng::tcsal
