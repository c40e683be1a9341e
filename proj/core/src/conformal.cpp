#include "cfgnn/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cfgnn/parallel.hpp"
#include "cfgnn/rng.hpp"

namespace cfgnn {

using json = nlohmann::json;

namespace {

std::span<const double> score_row(const Tensor& scores, NodeId v) {
  return {scores.data() + static_cast<std::size_t>(v) * scores.cols(), scores.cols()};
}

void check_kind(const Tensor& scores, const NodeData& data, ScoreKind kind) {
  if (kind == ScoreKind::Aps) {
    if (data.task != Task::Classification || scores.cols() != data.num_classes) {
      throw std::invalid_argument("conformal: APS requires classification scores with K columns");
    }
  } else {
    if (data.task != Task::Regression || scores.cols() != 2) {
      throw std::invalid_argument("conformal: CQR requires a two-column quantile pair");
    }
  }
}

struct SplitMetrics {
  double coverage = 0.0;
  double inefficiency = 0.0;
};

// coverage/inefficiency only; set construction elided for speed
SplitMetrics evaluate_split(const Tensor& scores, const NodeData& data,
                            std::span<const NodeId> calib, std::span<const NodeId> test,
                            double alpha, ScoreKind kind) {
  const auto calib_scores = true_label_scores(scores, data, calib, kind);
  const Threshold eta = conformal_quantile(calib_scores, alpha);
  double covered = 0.0;
  double ineff = 0.0;
  for (NodeId v : test) {
    const auto row = score_row(scores, v);
    if (kind == ScoreKind::Aps) {
      const auto set = aps_set(row, eta);
      ineff += static_cast<double>(set.size());
      if (std::binary_search(set.begin(), set.end(), data.labels[v])) covered += 1.0;
    } else {
      const Interval iv = cqr_interval(row[0], row[1], eta);
      ineff += iv.length();
      if (iv.contains(data.targets[v])) covered += 1.0;
    }
  }
  const double m = static_cast<double>(test.size());
  return {covered / m, ineff / m};
}

}  // namespace

std::vector<double> true_label_scores(const Tensor& scores, const NodeData& data,
                                      std::span<const NodeId> nodes, ScoreKind kind) {
  std::vector<double> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) {
    const auto row = score_row(scores, v);
    if (kind == ScoreKind::Aps) {
      out.push_back(aps_score(row, data.labels[v]));
    } else {
      out.push_back(cqr_score(row[0], row[1], data.targets[v]));
    }
  }
  return out;
}

SplitOutcome calibrate_and_predict(const Tensor& scores, const NodeData& data,
                                   std::span<const NodeId> calib,
                                   std::span<const NodeId> test, double alpha,
                                   ScoreKind kind) {
  if (calib.empty() || test.empty()) {
    throw std::invalid_argument("calibrate_and_predict: calib and test must be non-empty");
  }
  check_kind(scores, data, kind);

  SplitOutcome outcome;
  const auto calib_scores = true_label_scores(scores, data, calib, kind);
  outcome.calibration = {conformal_quantile(calib_scores, alpha), calib.size(), alpha, kind};

  double covered = 0.0;
  double ineff = 0.0;
  for (NodeId v : test) {
    const auto row = score_row(scores, v);
    if (kind == ScoreKind::Aps) {
      auto set = aps_set(row, outcome.calibration.threshold);
      ineff += static_cast<double>(set.size());
      if (std::binary_search(set.begin(), set.end(), data.labels[v])) covered += 1.0;
      outcome.predictions.sets.push_back(std::move(set));
    } else {
      const Interval iv = cqr_interval(row[0], row[1], outcome.calibration.threshold);
      ineff += iv.length();
      if (iv.contains(data.targets[v])) covered += 1.0;
      outcome.predictions.intervals.push_back(iv);
    }
  }
  outcome.coverage = covered / static_cast<double>(test.size());
  outcome.inefficiency = ineff / static_cast<double>(test.size());
  return outcome;
}

CoverageReport run_splits(const Tensor& scores, const NodeData& data,
                          std::span<const NodeId> pool, std::size_t calib_size,
                          double alpha, ScoreKind kind, std::size_t num_splits,
                          std::uint64_t base_seed, std::size_t threads) {
  if (num_splits < 1) throw std::invalid_argument("run_splits: num_splits must be >= 1");
  if (calib_size < 1 || calib_size >= pool.size()) {
    throw std::invalid_argument("run_splits: calib_size must leave a non-empty test set");
  }
  check_kind(scores, data, kind);

  CoverageReport report;
  report.alpha = alpha;
  report.kind = kind;
  report.seeds.resize(num_splits);
  report.coverages.resize(num_splits);
  report.ineffs.resize(num_splits);

  parallel_for(num_splits, threads, [&](std::size_t s) {
    const std::uint64_t seed = base_seed + s;
    std::vector<NodeId> shuffled(pool.begin(), pool.end());
    Rng rng(seed);
    rng.shuffle(shuffled);
    const std::span<const NodeId> calib(shuffled.data(), calib_size);
    const std::span<const NodeId> test(shuffled.data() + calib_size,
                                       shuffled.size() - calib_size);
    const SplitMetrics metrics = evaluate_split(scores, data, calib, test, alpha, kind);
    report.seeds[s] = seed;
    report.coverages[s] = metrics.coverage;
    report.ineffs[s] = metrics.inefficiency;
  });

  auto mean_std = [](const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / n)};
  };
  std::tie(report.coverage_mean, report.coverage_std) = mean_std(report.coverages);
  std::tie(report.ineff_mean, report.ineff_std) = mean_std(report.ineffs);
  return report;
}

std::string report_to_json(const CoverageReport& report) {
  json j;
  j["alpha"] = report.alpha;
  j["score"] = report.kind == ScoreKind::Aps ? "aps" : "cqr";
  json splits = json::array();
  for (std::size_t s = 0; s < report.seeds.size(); ++s) {
    splits.push_back({{"seed", report.seeds[s]},
                      {"coverage", report.coverages[s]},
                      {"ineff", report.ineffs[s]}});
  }
  j["splits"] = std::move(splits);
  j["coverage_mean"] = report.coverage_mean;
  j["coverage_std"] = report.coverage_std;
  j["ineff_mean"] = report.ineff_mean;
  j["ineff_std"] = report.ineff_std;
  return j.dump(2);
}

bool permutation_invariance_check(
    const Graph& g, const Tensor& features,
    const std::function<Tensor(const Graph&, const Tensor&)>& score_fn,
    std::span<const NodeId> calib_test, std::span<const NodeId> permuted) {
  if (calib_test.size() != permuted.size()) {
    throw std::invalid_argument("permutation_invariance_check: size mismatch");
  }
  const std::size_t n = g.num_nodes();
  std::vector<NodeId> relabel(n);
  std::iota(relabel.begin(), relabel.end(), 0);
  for (std::size_t i = 0; i < calib_test.size(); ++i) {
    relabel[calib_test[i]] = permuted[i];
  }

  std::vector<Edge> edges = g.edge_list();
  for (auto& [u, v] : edges) {
    u = relabel[u];
    v = relabel[v];
  }
  const Graph permuted_graph = build_graph(edges, n);

  Tensor permuted_features({n, features.cols()});
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < features.cols(); ++j) {
      permuted_features.at(relabel[v], j) = features.at(v, j);
    }
  }

  const Tensor base = score_fn(g, features);
  const Tensor moved = score_fn(permuted_graph, permuted_features);
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < base.cols(); ++j) {
      if (base.at(v, j) != moved.at(relabel[v], j)) return false;
    }
  }
  return true;
}

bool permutation_invariance_check(const Graph& g, const NodeData& data,
                                  const GcnModel& model, const DataSplit& split,
                                  std::span<const NodeId> permuted) {
  std::vector<NodeId> calib_test(split.calib.begin(), split.calib.end());
  calib_test.insert(calib_test.end(), split.test.begin(), split.test.end());
  return permutation_invariance_check(
      g, data.features,
      [&](const Graph& graph, const Tensor& x) {
        return predict_scores(model, normalized_adjacency(graph), x);
      },
      calib_test, permuted);
}

}  // namespace cfgnn
