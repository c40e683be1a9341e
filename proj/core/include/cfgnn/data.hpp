#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "cfgnn/graph.hpp"
#include "cfgnn/tensor.hpp"

namespace cfgnn {

enum class Task { Classification, Regression };

struct NodeData {
  Task task = Task::Classification;
  std::size_t num_classes = 0;  // classification only
  Tensor features;              // num_nodes x d
  std::vector<int> labels;      // classification: class index per node
  std::vector<double> targets;  // regression: real target per node
};

void validate_node_data(const Graph& g, const NodeData& data);

struct DataSplit {
  std::vector<NodeId> train, valid, calib, test;
};

struct SplitConfig {
  double train_frac = 0.2;
  double valid_frac = 0.1;
  std::size_t calib_cap = 1000;
  std::uint64_t seed = 0;
};

// Seeded Fisher-Yates permutation cut into train/valid/rest; rest is cut into
// calib of size min(calib_cap, floor(|rest|/2)) and test takes the remainder.
DataSplit random_split(const Graph& g, const SplitConfig& cfg);

// Dataset bundle directory: meta.json, edges.tsv, features.tsv, labels.tsv.
void save_bundle(const Graph& g, const NodeData& data, const std::filesystem::path& dir);
std::pair<Graph, NodeData> load_bundle(const std::filesystem::path& dir);

}  // namespace cfgnn
