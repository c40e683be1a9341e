#pragma once

#include <algorithm>
#include <span>
#include <vector>

namespace cfgnn {

enum class ScoreKind { Aps, Cqr };

// Conformal threshold; FULL means the inflated quantile level exceeded 1 and
// every candidate label must be included.
struct Threshold {
  double value = 0.0;
  bool full = false;

  static Threshold finite(double v) { return {v, false}; }
  static Threshold full_set() { return {0.0, true}; }
};

// The ceil((1-alpha)(n+1))-th smallest calibration score, or FULL when the
// level (1-alpha)(1+1/n) exceeds 1.
Threshold conformal_quantile(std::span<const double> scores, double alpha);

// APS: cumulative sum of descending class probabilities up to and including
// the true label; ties in probability broken by ascending class index.
double aps_score(std::span<const double> probs, int label);

// Smallest prefix of the descending order whose cumulative sum reaches the
// threshold; never empty, FULL gives all classes.
std::vector<int> aps_set(std::span<const double> probs, Threshold t);

// CQR: max{lo - y, y - hi}.
double cqr_score(double lo, double hi, double y);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return std::max(0.0, hi - lo); }
  bool contains(double y) const { return lo <= y && y <= hi; }
};

// [lo - eta, hi + eta]; FULL thresholds are rejected.
Interval cqr_interval(double lo, double hi, Threshold t);

}  // namespace cfgnn
