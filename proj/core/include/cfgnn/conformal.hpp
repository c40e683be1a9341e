#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfgnn/data.hpp"
#include "cfgnn/gcn.hpp"
#include "cfgnn/scores.hpp"
#include "cfgnn/tensor.hpp"

namespace cfgnn {

struct CalibrationResult {
  Threshold threshold;
  std::size_t n = 0;
  double alpha = 0.0;
  ScoreKind kind = ScoreKind::Aps;
};

struct PredictionOutput {
  std::vector<std::vector<int>> sets;  // classification, one per test node
  std::vector<Interval> intervals;     // regression, one per test node
};

struct SplitOutcome {
  CalibrationResult calibration;
  PredictionOutput predictions;
  double coverage = 0.0;
  double inefficiency = 0.0;
};

// Threshold from calibration scores only; test labels enter the metrics and
// nothing else.
SplitOutcome calibrate_and_predict(const Tensor& scores, const NodeData& data,
                                   std::span<const NodeId> calib,
                                   std::span<const NodeId> test, double alpha,
                                   ScoreKind kind);

struct CoverageReport {
  double alpha = 0.0;
  ScoreKind kind = ScoreKind::Aps;
  std::vector<std::uint64_t> seeds;
  std::vector<double> coverages;
  std::vector<double> ineffs;
  double coverage_mean = 0.0;
  double coverage_std = 0.0;
  double ineff_mean = 0.0;
  double ineff_std = 0.0;
};

// Reshuffles which pool nodes act as calibration (size calib_size) vs test,
// once per split with seed base_seed + s, against frozen per-node scores.
CoverageReport run_splits(const Tensor& scores, const NodeData& data,
                          std::span<const NodeId> pool, std::size_t calib_size,
                          double alpha, ScoreKind kind, std::size_t num_splits,
                          std::uint64_t base_seed, std::size_t threads = 1);

std::string report_to_json(const CoverageReport& report);

// Relabels the calib+test block of the graph (features and edges move with
// their nodes), recomputes scores, and checks that every relabeled node keeps
// its exact score row. score_fn must map (graph, features) to per-node rows.
bool permutation_invariance_check(
    const Graph& g, const Tensor& features,
    const std::function<Tensor(const Graph&, const Tensor&)>& score_fn,
    std::span<const NodeId> calib_test, std::span<const NodeId> permuted);

// Convenience overload for a trained base model.
bool permutation_invariance_check(const Graph& g, const NodeData& data,
                                  const GcnModel& model, const DataSplit& split,
                                  std::span<const NodeId> permuted);

// Per-node non-conformity scores of the true labels.
std::vector<double> true_label_scores(const Tensor& scores, const NodeData& data,
                                      std::span<const NodeId> nodes, ScoreKind kind);

}  // namespace cfgnn
