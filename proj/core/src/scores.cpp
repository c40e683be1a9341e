#include "cfgnn/scores.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cfgnn/numeric.hpp"

namespace cfgnn {

Threshold conformal_quantile(std::span<const double> scores, double alpha) {
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("conformal_quantile: empty score list");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("conformal_quantile: alpha must be in (0,1)");
  }
  const std::int64_t k = snapped_ceil((1.0 - alpha) * static_cast<double>(n + 1));
  if (k > static_cast<std::int64_t>(n)) return Threshold::full_set();

  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  return Threshold::finite(sorted[static_cast<std::size_t>(k - 1)]);
}

namespace {

// class indices ordered by descending probability, ties by ascending index
std::vector<int> descending_order(std::span<const double> probs) {
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  return order;
}

}  // namespace

double aps_score(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw std::invalid_argument("aps_score: label " + std::to_string(label) +
                                " out of range for " + std::to_string(probs.size()) +
                                " classes");
  }
  double total = 0.0;
  for (double p : probs) total += p;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("aps_score: probabilities sum to " + std::to_string(total) +
                                ", expected 1");
  }
  const auto order = descending_order(probs);
  double cum = 0.0;
  for (int cls : order) {
    cum += probs[cls];
    if (cls == label) return cum;
  }
  return cum;  // unreachable
}

std::vector<int> aps_set(std::span<const double> probs, Threshold t) {
  const auto order = descending_order(probs);
  if (t.full) {
    std::vector<int> all(order.begin(), order.end());
    std::sort(all.begin(), all.end());
    return all;
  }
  std::vector<int> set;
  double cum = 0.0;
  for (int cls : order) {
    cum += probs[cls];
    set.push_back(cls);
    if (cum >= t.value) break;
  }
  // cumulative total can fall short of the threshold only by float dust; the
  // loop then already collected every class
  std::sort(set.begin(), set.end());
  return set;
}

double cqr_score(double lo, double hi, double y) { return std::max(lo - y, y - hi); }

Interval cqr_interval(double lo, double hi, Threshold t) {
  if (t.full) {
    throw std::invalid_argument(
        "cqr_interval: FULL threshold; calibration set too small for this alpha");
  }
  return Interval{lo - t.value, hi + t.value};
}

}  // namespace cfgnn
