#pragma once

// Training objectives over text-frame similarities and frame scores.
//
//   L = L_rank_n + L_rank_a + L_dil + L_cl + lambda1 * L_sp + lambda2 * L_sm
//
// L_sp is the sum of squared temporal differences of the normalized
// abnormal-text similarities and L_sm their sum. Note the naming: L_sp acts
// as a smoothness term and L_sm as a sparsity term; weights follow the symbols.

#include "tpwng/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace tpwng::loss {

using ad::Matrix;
using ad::Var;

/// Differentiable per-video min-max normalization; constant input -> zeros.
Var minmax_normalize(const Var& s);

/// Cosine similarity of two equal-length vectors; 0 if either is all zeros.
Var cosine(const Var& a, const Var& b);

/// max(0, 1 - max(S_nn) + max over phi_na). `phi_na` is F x (k - 1).
Var rank_loss_normal(const Var& s_nn, const Var& phi_na);

/// Two hinges, one for S_an and one for S_aa, each against the largest
/// similarity of the other abnormal texts (`phi_aa`, F x (k - 2)). When k = 2
/// there are no other texts (pass an invalid Var) and each hinge reduces to
/// max(0, 1 - max(S)).
Var rank_loss_abnormal(const Var& s_an, const Var& s_aa, const Var& phi_aa);

/// Mean over videos of cos(S~_aa, S~_an).
Var dil_loss(std::span<const Var> s_aa_norm, std::span<const Var> s_an_norm);

struct SmoothSparse {
  Var sp;  // sum_j (s[j] - s[j+1])^2
  Var sm;  // sum_j s[j]
};

/// Requires F >= 2.
SmoothSparse smooth_sparse(const Var& s_aa_norm);

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy with the pseudo-labels as targets, averaged over all
/// frames of all videos. Scores are clamped to [1e-7, 1 - 1e-7].
Var bce_loss(std::span<const Var> scores, std::span<const std::vector<std::uint8_t>> labels);

struct LossWeights {
  double lambda1 = 0.1;   // on L_sp
  double lambda2 = 0.01;  // on L_sm
};

/// Switches for the loss-term ablation. L_cl, L_sp and L_sm are always on.
struct LossToggles {
  bool rank_normal = true;
  bool rank_abnormal = true;
  bool dil = true;
};

struct LossTerms {
  Var rank_normal, rank_abnormal, dil, cl, sp, sm;
};

struct LossReport {
  double rank_normal = 0.0;
  double rank_abnormal = 0.0;
  double dil = 0.0;
  double cl = 0.0;
  double sp = 0.0;
  double sm = 0.0;
  double total = 0.0;
};

/// Weighted sum of the enabled terms. Disabled or invalid terms contribute 0.
Var total_loss(ad::Tape& tape, const LossTerms& terms, const LossWeights& weights,
               const LossToggles& toggles = {});

/// Scalar form of total_loss for already-evaluated terms.
double total_loss(const LossReport& terms, const LossWeights& weights, const LossToggles& toggles = {});

}  // namespace tpwng::loss
