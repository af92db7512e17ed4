#pragma once

// Normality-guided pseudo-label generation.
//
//   psi   = alpha * mm(S_an) + (1 - alpha) * (1 - mm(S_aa))
//   gamma = threshold(mm(psi), theta)
//
// where mm is per-video min-max normalization. Large psi marks a frame that
// looks normal, so the default polarity labels frame j anomalous when
// 1 - mm(psi)[j] >= theta. LabelPolarity::Literal labels mm(psi)[j] >= theta.

#include "tpwng/autodiff.hpp"
#include "tpwng/manifest.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tpwng::plg {

using ad::Matrix;
using ad::Vector;

enum class LabelPolarity { AnomalyOriented, Literal };

struct PlgConfig {
  double alpha = 0.2;  // guidance weight, [0, 1]
  double theta = 0.55; // threshold, (0, 1)
  LabelPolarity polarity = LabelPolarity::AnomalyOriented;
};

void validate(const PlgConfig& cfg);

/// values[j] = <frames.row(j), text>.
Vector similarities(const Matrix& frames, const Eigen::RowVectorXd& text);

/// (s - min) / (max - min); a constant vector maps to all zeros.
Vector minmax_normalize(const Vector& s);

/// alpha * s_an_norm + (1 - alpha) * (1 - s_aa_norm). ContractError on length mismatch.
Vector fuse(const Vector& s_an_norm, const Vector& s_aa_norm, double alpha);

/// Binary labels from the normalized fusion. Ties at the threshold are labeled 1.
/// Under AnomalyOriented polarity a constant psi_norm carries no evidence and
/// yields all zeros.
std::vector<std::uint8_t> threshold_labels(const Vector& psi_norm, double theta,
                                           LabelPolarity polarity = LabelPolarity::AnomalyOriented);

struct PseudoLabels {
  std::string video_id;
  std::optional<Vector> psi_norm;  // absent for normal videos
  std::vector<std::uint8_t> gamma;
};

/// Abnormal-video labels from precomputed raw similarities.
PseudoLabels labels_from_similarities(const Vector& s_an, const Vector& s_aa, const PlgConfig& cfg);

/// Full pipeline for one video. `text_set` is k x D (row i = class i + 1) and
/// `enhanced_normal` is the NVP-enhanced normal text (1 x D). Normal videos
/// always get all-zero labels.
PseudoLabels pseudo_labels(const data::FeatureSequence& video, const Matrix& text_set,
                           const Eigen::RowVectorXd& enhanced_normal, const PlgConfig& cfg);

}  // namespace tpwng::plg
