#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfgnn/autodiff.hpp"
#include "cfgnn/data.hpp"
#include "cfgnn/graph.hpp"
#include "cfgnn/tensor.hpp"

namespace cfgnn {

enum class Head { Softmax, Quantile };

// GCN with layer rule H_l = relu(A_hat H_{l-1} W_l + b_l); final layer linear.
// A Quantile head has exactly two output columns, the lower and upper
// conditional quantile estimates at levels alpha/2 and 1-alpha/2.
struct GcnModel {
  std::vector<Tensor> weights;  // per layer, d_{l-1} x d_l
  std::vector<Tensor> biases;   // per layer, d_l
  Head head = Head::Softmax;
  double alpha = 0.0;  // quantile head: target miscoverage used at train time

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return weights.front().rows(); }
  std::size_t output_dim() const { return weights.back().cols(); }
};

struct TrainConfig {
  std::size_t hidden = 64;
  std::size_t layers = 2;
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  double weight_decay = 5e-4;
  double dropout = 0.5;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  double alpha = 0.1;  // quantile head only
};

GcnModel init_gcn(std::size_t input_dim, std::size_t hidden, std::size_t layers,
                  std::size_t output_dim, Head head, Rng& rng);

// Tape forward with the model parameters as trainable leaves.
struct GcnTapeForward {
  std::vector<Var> weights;
  std::vector<Var> biases;
  Var output;
};
GcnTapeForward gcn_forward_tape(Tape& tape, const GcnModel& model, const SparseMatrix& a_hat,
                                const Tensor& x, double dropout_rate, Rng* dropout_rng);

// Evaluation-mode forward; raw head output (logits or quantile pair).
Tensor gcn_forward(const GcnModel& model, const SparseMatrix& a_hat, const Tensor& x);

// Frozen per-node scores: softmax probabilities for classification heads, the
// raw quantile pair for regression heads.
Tensor predict_scores(const GcnModel& model, const SparseMatrix& a_hat, const Tensor& x);

// Cross-entropy on train nodes, best-validation-loss checkpoint kept.
GcnModel train_classifier(const Graph& g, const NodeData& data, const DataSplit& split,
                          const TrainConfig& cfg);

// Summed pinball losses at levels alpha/2 and 1-alpha/2.
GcnModel train_quantile_regressor(const Graph& g, const NodeData& data,
                                  const DataSplit& split, const TrainConfig& cfg);

std::string model_to_json(const GcnModel& model);
GcnModel model_from_json(const std::string& text);
void save_model(const GcnModel& model, const std::filesystem::path& path);
GcnModel load_model(const std::filesystem::path& path);

}  // namespace cfgnn
