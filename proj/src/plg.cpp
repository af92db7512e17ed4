#include "tpwng/plg.hpp"

#include "tpwng/errors.hpp"

namespace tpwng::plg {

void validate(const PlgConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ContractError("PLG alpha must lie in [0, 1]");
  if (!(cfg.theta > 0.0 && cfg.theta < 1.0)) throw ContractError("PLG theta must lie in (0, 1)");
}

Vector similarities(const Matrix& frames, const Eigen::RowVectorXd& text) {
  if (frames.cols() != text.size()) throw DimensionError("similarities: dimension mismatch");
  return frames * text.transpose();
}

Vector minmax_normalize(const Vector& s) {
  if (s.size() == 0) throw ContractError("minmax_normalize of an empty vector");
  const double lo = s.minCoeff();
  const double hi = s.maxCoeff();
  if (hi == lo) return Vector::Zero(s.size());
  return ((s.array() - lo) / (hi - lo)).matrix();
}

Vector fuse(const Vector& s_an_norm, const Vector& s_aa_norm, double alpha) {
  if (s_an_norm.size() != s_aa_norm.size()) throw ContractError("fuse: length mismatch");
  return (alpha * s_an_norm.array() + (1.0 - alpha) * (1.0 - s_aa_norm.array())).matrix();
}

std::vector<std::uint8_t> threshold_labels(const Vector& psi_norm, double theta, LabelPolarity polarity) {
  std::vector<std::uint8_t> gamma(static_cast<std::size_t>(psi_norm.size()), 0);
  if (psi_norm.size() == 0) return gamma;
  if (polarity == LabelPolarity::Literal) {
    for (Eigen::Index j = 0; j < psi_norm.size(); ++j) gamma[j] = psi_norm[j] >= theta ? 1 : 0;
    return gamma;
  }
  if (psi_norm.maxCoeff() == psi_norm.minCoeff()) return gamma;
  for (Eigen::Index j = 0; j < psi_norm.size(); ++j) gamma[j] = (1.0 - psi_norm[j]) >= theta ? 1 : 0;
  return gamma;
}

PseudoLabels labels_from_similarities(const Vector& s_an, const Vector& s_aa, const PlgConfig& cfg) {
  PseudoLabels out;
  const Vector psi = fuse(minmax_normalize(s_an), minmax_normalize(s_aa), cfg.alpha);
  Vector psi_norm = minmax_normalize(psi);
  out.gamma = threshold_labels(psi_norm, cfg.theta, cfg.polarity);
  out.psi_norm = std::move(psi_norm);
  return out;
}

PseudoLabels pseudo_labels(const data::FeatureSequence& video, const Matrix& text_set,
                           const Eigen::RowVectorXd& enhanced_normal, const PlgConfig& cfg) {
  if (!video.abnormal()) {
    PseudoLabels out;
    out.video_id = video.video_id;
    out.gamma.assign(static_cast<std::size_t>(video.num_frames()), 0);
    return out;
  }
  const int k = static_cast<int>(text_set.rows());
  if (video.class_index < 1 || video.class_index >= k) {
    throw ContractError(video.video_id + ": no abnormal text embedding for class index " +
                        std::to_string(video.class_index));
  }
  const Vector s_an = similarities(video.frames, enhanced_normal);
  const Vector s_aa = similarities(video.frames, text_set.row(video.class_index - 1));
  PseudoLabels out = labels_from_similarities(s_an, s_aa, cfg);
  out.video_id = video.video_id;
  return out;
}

}  // namespace tpwng::plg
