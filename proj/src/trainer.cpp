#include "tpwng/trainer.hpp"

#include "tpwng/errors.hpp"
#include "tpwng/metrics.hpp"
#include "tpwng/random.hpp"

#include <algorithm>
#include <cmath>

namespace tpwng {

using ad::Matrix;
using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t normal_pool, std::size_t abnormal_pool, int batch_normal,
                           int batch_abnormal, std::uint64_t seed)
    : batch_normal_(batch_normal), batch_abnormal_(batch_abnormal), rng_(seed) {
  if (normal_pool == 0 || abnormal_pool == 0) throw ContractError("batch sampler: empty pool");
  if (batch_normal < 1 || batch_abnormal < 1) throw ContractError("batch sampler: batch sizes must be >= 1");
  normal_.order.resize(normal_pool);
  abnormal_.order.resize(abnormal_pool);
  for (std::size_t i = 0; i < normal_pool; ++i) normal_.order[i] = i;
  for (std::size_t i = 0; i < abnormal_pool; ++i) abnormal_.order[i] = i;
  std::shuffle(normal_.order.begin(), normal_.order.end(), rng_);
  std::shuffle(abnormal_.order.begin(), abnormal_.order.end(), rng_);
}

std::size_t BatchSampler::draw(Pool& pool) {
  if (pool.cursor == pool.order.size()) {
    std::shuffle(pool.order.begin(), pool.order.end(), rng_);
    pool.cursor = 0;
  }
  return pool.order[pool.cursor++];
}

Batch BatchSampler::next() {
  Batch b;
  b.normal.reserve(batch_normal_);
  b.abnormal.reserve(batch_abnormal_);
  for (int i = 0; i < batch_normal_; ++i) b.normal.push_back(draw(normal_));
  for (int i = 0; i < batch_abnormal_; ++i) b.abnormal.push_back(draw(abnormal_));
  return b;
}

int BatchSampler::steps_per_epoch() const {
  auto ceil_div = [](std::size_t a, int b) { return static_cast<int>((a + b - 1) / b); };
  return std::max(ceil_div(normal_.order.size(), batch_normal_), ceil_div(abnormal_.order.size(), batch_abnormal_));
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<ad::Parameter*> params, Options opt) : params_(std::move(params)), opt_(opt) {
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = params_[i]->grad();
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    auto update = (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opt_.eps);
    Matrix& w = params_[i]->value();
    w.array() -= opt_.learning_rate * (update + opt_.weight_decay * w.array());
  }
}

// ---------------------------------------------------------------------------

namespace {

struct BatchGraph {
  loss::LossTerms terms;
};

Var enhanced_normal_text(Tape& tape, Model& model, const TrainConfig& cfg, const Var& normal_text,
                         const Matrix& normal_frames) {
  if (cfg.nvp == prompt::NvpMode::Off) return normal_text;
  Var q = prompt::compute_nvp(tape, normal_text, normal_frames, cfg.nvp);
  return prompt::enhance_normal_text(tape, normal_text, q, model.nvp_ffn);
}

Var mean_of(std::span<const Var> terms) {
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.0 / static_cast<double>(terms.size()));
}

// Abnormal-text columns other than `tau` (1-based), or an invalid Var if none.
Var other_columns(const Var& sims, int tau) {
  std::vector<Var> parts;
  const int a = tau - 1;
  if (a > 0) parts.push_back(ad::slice_cols(sims, 0, a));
  if (a + 1 < sims.cols()) parts.push_back(ad::slice_cols(sims, a + 1, sims.cols() - a - 1));
  if (parts.empty()) return Var();
  return parts.size() == 1 ? parts[0] : ad::concat_cols(parts);
}

loss::LossTerms build_batch(Tape& tape, Model& model, const TrainConfig& cfg,
                            std::span<const FeatureSequence* const> normals,
                            std::span<const FeatureSequence* const> abnormals) {
  if (normals.empty() || abnormals.empty()) throw ContractError("batch needs normal and abnormal videos");
  const int k = model.num_classes();
  const plg::PlgConfig plg_cfg = cfg.effective_plg();

  Var text = prompt::build_embedding_set(tape, model.prompts);
  Var normal_text = ad::slice_rows(text, k - 1, 1);
  Var abnormal_text_t = ad::transpose(ad::slice_rows(text, 0, k - 1));  // D x (k-1)
  Var normal_text_t = ad::transpose(normal_text);

  std::vector<Var> rank_n, enhanced;
  rank_n.reserve(normals.size());
  enhanced.reserve(normals.size());
  for (const FeatureSequence* v : normals) {
    if (v->abnormal()) throw ContractError(v->video_id + ": abnormal video in the normal slot");
    Var x = tape.constant(v->frames);
    rank_n.push_back(loss::rank_loss_normal(ad::matmul(x, normal_text_t), ad::matmul(x, abnormal_text_t)));
    enhanced.push_back(enhanced_normal_text(tape, model, cfg, normal_text, v->frames));
  }

  std::vector<Var> rank_a, aa_norm, an_norm, sp, sm;
  std::vector<std::vector<std::uint8_t>> labels;
  labels.reserve(normals.size() + abnormals.size());
  for (const FeatureSequence* v : normals) labels.emplace_back(static_cast<std::size_t>(v->num_frames()), 0);
  for (std::size_t i = 0; i < abnormals.size(); ++i) {
    const FeatureSequence* v = abnormals[i];
    if (!v->abnormal()) throw ContractError(v->video_id + ": normal video in the abnormal slot");
    if (v->class_index < 1 || v->class_index >= k) throw ContractError(v->video_id + ": class index out of range");
    Var x = tape.constant(v->frames);
    Var s_an = ad::matmul(x, ad::transpose(enhanced[i % enhanced.size()]));
    Var s_all = ad::matmul(x, abnormal_text_t);
    Var s_aa = ad::slice_cols(s_all, v->class_index - 1, 1);
    rank_a.push_back(loss::rank_loss_abnormal(s_an, s_aa, other_columns(s_all, v->class_index)));

    Var aa = loss::minmax_normalize(s_aa);
    aa_norm.push_back(aa);
    an_norm.push_back(loss::minmax_normalize(s_an));
    auto ss = loss::smooth_sparse(aa);
    sp.push_back(ss.sp);
    sm.push_back(ss.sm);

    // Labels are targets: computed from values, no gradient path.
    labels.push_back(plg::labels_from_similarities(s_an.value().col(0), s_aa.value().col(0), plg_cfg).gamma);
  }

  std::vector<const FeatureSequence*> all(normals.begin(), normals.end());
  all.insert(all.end(), abnormals.begin(), abnormals.end());
  std::vector<Eigen::Index> lengths;
  Eigen::Index rows = 0;
  for (const auto* v : all) {
    lengths.push_back(v->num_frames());
    rows += v->num_frames();
  }
  Matrix stacked(rows, model.dim());
  Eigen::Index at = 0;
  for (const auto* v : all) {
    stacked.middleRows(at, v->num_frames()) = v->frames;
    at += v->num_frames();
  }
  const auto segments = tcsal::make_segments(lengths);
  Var eta = model.classifier.forward(tape, model.encoder.forward(tape, tape.constant(std::move(stacked)), segments));
  std::vector<Var> scores;
  scores.reserve(all.size());
  for (const auto& s : segments) scores.push_back(ad::slice_rows(eta, s.offset, s.length));

  loss::LossTerms t;
  t.rank_normal = mean_of(rank_n);
  t.rank_abnormal = mean_of(rank_a);
  t.dil = loss::dil_loss(aa_norm, an_norm);
  t.cl = loss::bce_loss(scores, labels);
  t.sp = mean_of(sp);
  t.sm = mean_of(sm);
  return t;
}

loss::LossReport report_of(const loss::LossTerms& t, double total) {
  loss::LossReport r;
  r.rank_normal = t.rank_normal.scalar();
  r.rank_abnormal = t.rank_abnormal.scalar();
  r.dil = t.dil.scalar();
  r.cl = t.cl.scalar();
  r.sp = t.sp.scalar();
  r.sm = t.sm.scalar();
  r.total = total;
  return r;
}

}  // namespace

loss::LossReport train_step(Model& model, const TrainConfig& cfg, std::span<const FeatureSequence* const> normals,
                            std::span<const FeatureSequence* const> abnormals, Adam& opt) {
  opt.zero_grad();
  Tape tape;
  loss::LossTerms terms = build_batch(tape, model, cfg, normals, abnormals);
  Var total = loss::total_loss(tape, terms, cfg.weights, cfg.toggles);
  const loss::LossReport report = report_of(terms, total.scalar());
  tape.backward(total);
  for (auto* p : model.parameters()) {
    if (!p->grad().allFinite()) throw NumericError("non-finite gradient in " + p->name());
  }
  opt.step();
  return report;
}

loss::LossReport batch_losses(Model& model, const TrainConfig& cfg, std::span<const FeatureSequence* const> normals,
                              std::span<const FeatureSequence* const> abnormals) {
  Tape tape(false);
  loss::LossTerms terms = build_batch(tape, model, cfg, normals, abnormals);
  return report_of(terms, loss::total_loss(tape, terms, cfg.weights, cfg.toggles).scalar());
}

std::vector<StepLog> train(Model& model, const TrainConfig& cfg, const std::vector<FeatureSequence>& videos,
                           const StepCallback& on_step) {
  validate(cfg);
  std::vector<const FeatureSequence*> normals, abnormals;
  for (const auto& v : videos) (v.abnormal() ? abnormals : normals).push_back(&v);
  BatchSampler sampler(normals.size(), abnormals.size(), cfg.batch_normal, cfg.batch_abnormal,
                       derive_seed(cfg.seed, "batches"));
  Adam opt(model.parameters(), {.learning_rate = cfg.learning_rate, .weight_decay = cfg.weight_decay});

  std::vector<StepLog> log;
  const int steps = sampler.steps_per_epoch();
  std::vector<const FeatureSequence*> bn, ba;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int s = 0; s < steps; ++s) {
      const Batch b = sampler.next();
      bn.clear();
      ba.clear();
      for (auto i : b.normal) bn.push_back(normals[i]);
      for (auto i : b.abnormal) ba.push_back(abnormals[i]);
      StepLog entry{epoch, static_cast<int>(opt.steps()) + 1, train_step(model, cfg, bn, ba, opt)};
      if (on_step) on_step(entry);
      log.push_back(entry);
    }
  }
  return log;
}

std::vector<ad::Vector> score_videos(Model& model, const std::vector<FeatureSequence>& videos) {
  std::vector<ad::Vector> out;
  out.reserve(videos.size());
  // Bounded stacks keep peak memory flat for large test sets.
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < videos.size(); begin += kChunk) {
    const std::size_t end = std::min(videos.size(), begin + kChunk);
    std::vector<Eigen::Index> lengths;
    Eigen::Index rows = 0;
    for (std::size_t i = begin; i < end; ++i) {
      lengths.push_back(videos[i].num_frames());
      rows += videos[i].num_frames();
    }
    Matrix stacked(rows, model.dim());
    Eigen::Index at = 0;
    for (std::size_t i = begin; i < end; ++i) {
      stacked.middleRows(at, videos[i].num_frames()) = videos[i].frames;
      at += videos[i].num_frames();
    }
    Tape tape(false);
    const auto segments = tcsal::make_segments(lengths);
    Var eta = model.classifier.forward(tape, model.encoder.forward(tape, tape.constant(std::move(stacked)), segments));
    for (const auto& s : segments) out.push_back(eta.value().block(s.offset, 0, s.length, 1));
  }
  return out;
}

EvalResult evaluate(Model& model, const std::vector<FeatureSequence>& videos) {
  for (const auto& v : videos) {
    if (!v.frame_truth) throw ContractError(v.video_id + ": evaluation needs frame truth");
  }
  EvalResult result;
  const auto scores = score_videos(model, videos);
  std::vector<double> all_scores;
  std::vector<std::uint8_t> all_truth;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    all_scores.insert(all_scores.end(), scores[i].data(), scores[i].data() + scores[i].size());
    all_truth.insert(all_truth.end(), videos[i].frame_truth->begin(), videos[i].frame_truth->end());
    result.curves.push_back({videos[i].video_id, scores[i], *videos[i].frame_truth});
  }
  result.num_frames = all_scores.size();
  result.auc = metrics::frame_auc(all_scores, all_truth);
  result.ap = metrics::frame_ap(all_scores, all_truth);
  return result;
}

std::vector<plg::PseudoLabels> infer_pseudo_labels(Model& model, const TrainConfig& cfg,
                                                   const std::vector<FeatureSequence>& videos) {
  Tape tape(false);
  const int k = model.num_classes();
  Var text = prompt::build_embedding_set(tape, model.prompts);
  Var normal_text = ad::slice_rows(text, k - 1, 1);
  std::vector<const FeatureSequence*> normals;
  for (const auto& v : videos) {
    if (!v.abnormal()) normals.push_back(&v);
  }
  if (cfg.nvp != prompt::NvpMode::Off && normals.empty()) {
    throw ContractError("pseudo-labels with NVP need at least one normal video");
  }
  const plg::PlgConfig plg_cfg = cfg.effective_plg();
  std::vector<plg::PseudoLabels> out;
  std::size_t abnormal_seen = 0;
  for (const auto& v : videos) {
    Eigen::RowVectorXd enhanced = normal_text.value().row(0);
    if (v.abnormal() && cfg.nvp != prompt::NvpMode::Off) {
      const FeatureSequence* n = normals[abnormal_seen % normals.size()];
      enhanced = enhanced_normal_text(tape, model, cfg, normal_text, n->frames).value().row(0);
    }
    if (v.abnormal()) ++abnormal_seen;
    out.push_back(plg::pseudo_labels(v, text.value(), enhanced, plg_cfg));
  }
  return out;
}

}  // namespace tpwng
