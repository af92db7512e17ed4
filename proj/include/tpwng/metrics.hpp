#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace tpwng::metrics {

/// Area under the ROC curve via the rank-sum statistic with midranks for
/// tied scores. Returns nullopt when truth lacks positives or negatives.
std::optional<double> frame_auc(std::span<const double> scores, std::span<const std::uint8_t> truth);

/// Average precision: mean over positives of precision at their rank, with
/// frames ordered by descending score and ties kept in input order.
/// Returns nullopt when truth lacks positives or negatives.
std::optional<double> frame_ap(std::span<const double> scores, std::span<const std::uint8_t> truth);

}  // namespace tpwng::metrics
