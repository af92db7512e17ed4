#include "tpwng/losses.hpp"

#include "tpwng/errors.hpp"

namespace tpwng::loss {

using ad::Tape;

Var minmax_normalize(const Var& s) {
  if (s.size() == 0) throw ContractError("minmax_normalize of an empty vector");
  Var hi = ad::reduce_max(s);
  Var lo = ad::reduce_min(s);
  if (hi.scalar() == lo.scalar()) return s.tape().constant(Matrix::Zero(s.rows(), s.cols()));
  return ad::div(ad::sub(s, lo), ad::sub(hi, lo));
}

Var cosine(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractError("cosine: shape mismatch");
  Var na = ad::sum(ad::mul(a, a));
  Var nb = ad::sum(ad::mul(b, b));
  if (na.scalar() == 0.0 || nb.scalar() == 0.0) return a.tape().scalar(0.0);
  return ad::div(ad::sum(ad::mul(a, b)), ad::sqrt(ad::mul(na, nb)));
}

Var rank_loss_normal(const Var& s_nn, const Var& phi_na) {
  if (!phi_na.valid() || phi_na.size() == 0) {
    throw ContractError("rank_loss_normal needs at least one abnormal text (k >= 2)");
  }
  Var margin = ad::add(ad::sub(s_nn.tape().scalar(1.0), ad::reduce_max(s_nn)), ad::reduce_max(phi_na));
  return ad::relu(margin);
}

Var rank_loss_abnormal(const Var& s_an, const Var& s_aa, const Var& phi_aa) {
  Tape& tape = s_an.tape();
  Var one = tape.scalar(1.0);
  const bool has_others = phi_aa.valid() && phi_aa.size() > 0;
  auto hinge = [&](const Var& s) {
    Var m = ad::sub(one, ad::reduce_max(s));
    if (has_others) m = ad::add(m, ad::reduce_max(phi_aa));
    return ad::relu(m);
  };
  return ad::add(hinge(s_an), hinge(s_aa));
}

Var dil_loss(std::span<const Var> s_aa_norm, std::span<const Var> s_an_norm) {
  if (s_aa_norm.size() != s_an_norm.size()) throw ContractError("dil_loss: video count mismatch");
  if (s_aa_norm.empty()) throw ContractError("dil_loss: no videos");
  Var total = cosine(s_aa_norm[0], s_an_norm[0]);
  for (std::size_t i = 1; i < s_aa_norm.size(); ++i) {
    total = ad::add(total, cosine(s_aa_norm[i], s_an_norm[i]));
  }
  return ad::scale(total, 1.0 / static_cast<double>(s_aa_norm.size()));
}

SmoothSparse smooth_sparse(const Var& s) {
  const Eigen::Index f = s.rows() * s.cols();
  if (f < 2) throw ContractError("smooth_sparse needs at least two frames");
  Var col = s.cols() == 1 ? s : ad::transpose(s);
  Var diff = ad::sub(ad::slice_rows(col, 1, f - 1), ad::slice_rows(col, 0, f - 1));
  return {ad::sum(ad::mul(diff, diff)), ad::sum(col)};
}

Var bce_loss(std::span<const Var> scores, std::span<const std::vector<std::uint8_t>> labels) {
  if (scores.size() != labels.size()) throw ContractError("bce_loss: video count mismatch");
  if (scores.empty()) throw ContractError("bce_loss: no videos");
  Tape& tape = scores.front().tape();
  Var total;
  Eigen::Index frames = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Var& eta = scores[i];
    if (static_cast<std::size_t>(eta.size()) != labels[i].size()) {
      throw ContractError("bce_loss: score and label lengths differ");
    }
    Matrix y(eta.rows(), eta.cols());
    for (Eigen::Index j = 0; j < y.size(); ++j) y.data()[j] = labels[i][j] ? 1.0 : 0.0;
    Var p = ad::clamp(eta, kProbabilityClamp, 1.0 - kProbabilityClamp);
    Var yv = tape.constant(y);
    Var one_minus_y = tape.constant((1.0 - y.array()).matrix());
    Var ll = ad::add(ad::mul(yv, ad::log(p)), ad::mul(one_minus_y, ad::log(ad::add_scalar(ad::neg(p), 1.0))));
    Var s = ad::sum(ll);
    total = total.valid() ? ad::add(total, s) : s;
    frames += eta.size();
  }
  return ad::scale(total, -1.0 / static_cast<double>(frames));
}

Var total_loss(Tape& tape, const LossTerms& t, const LossWeights& w, const LossToggles& on) {
  Var total = tape.scalar(0.0);
  auto add_term = [&](const Var& term, double weight, bool enabled) {
    if (!enabled || !term.valid() || weight == 0.0) return;
    total = ad::add(total, weight == 1.0 ? term : ad::scale(term, weight));
  };
  add_term(t.rank_normal, 1.0, on.rank_normal);
  add_term(t.rank_abnormal, 1.0, on.rank_abnormal);
  add_term(t.dil, 1.0, on.dil);
  add_term(t.cl, 1.0, true);
  add_term(t.sp, w.lambda1, true);
  add_term(t.sm, w.lambda2, true);
  return total;
}

double total_loss(const LossReport& t, const LossWeights& w, const LossToggles& on) {
  double total = 0.0;
  if (on.rank_normal) total += t.rank_normal;
  if (on.rank_abnormal) total += t.rank_abnormal;
  if (on.dil) total += t.dil;
  total += t.cl;
  total += w.lambda1 * t.sp;
  total += w.lambda2 * t.sm;
  return total;
}

}  // namespace tpwng::loss
