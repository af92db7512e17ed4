#include "tpwng/metrics.hpp"

#include "tpwng/errors.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace tpwng::metrics {

namespace {

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts count(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw ContractError("metric: score and truth lengths differ");
  Counts c;
  for (auto t : truth) (t ? c.pos : c.neg)++;
  return c;
}

}  // namespace

std::optional<double> frame_auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  const Counts c = count(scores, truth);
  if (c.pos == 0 || c.neg == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1 .. j+1 share their mean.
    const double midrank = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t q = i; q <= j; ++q) {
      if (truth[order[q]]) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(c.pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(c.neg));
}

std::optional<double> frame_ap(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  const Counts c = count(scores, truth);
  if (c.pos == 0 || c.neg == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double precision_sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!truth[order[k]]) continue;
    ++tp;
    precision_sum += static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  return precision_sum / static_cast<double>(c.pos);
}

}  // namespace tpwng::metrics
