#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfgnn/autodiff.hpp"
#include "cfgnn/data.hpp"
#include "cfgnn/gcn.hpp"
#include "cfgnn/graph.hpp"

namespace cfgnn {

struct CorrectionConfig {
  double holdout_fraction = 0.5;  // fraction of calib withheld for the loss
  double tau = 1.0;               // soft-assignment temperature
  double reg_coeff = 1.0;         // regression consistency weight
  std::size_t epochs = 400;
  double learning_rate = 1e-3;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  // The membership proxy is sigma((eta - V)/tau) so that smaller loss means
  // smaller sets; set paper_sign to flip the argument to sigma((V - eta)/tau).
  bool paper_sign = false;
  bool resample_holdout_per_epoch = false;
  double weight_decay = 0.0;
};

struct CorrectionSplit {
  std::vector<NodeId> cor_calib;
  std::vector<NodeId> cor_test;
  std::vector<NodeId> remaining_calib;  // reserved for final conformal calibration
};

// GNN over the same graph whose input features are the frozen base scores;
// input and output width both equal the base-score width.
struct CorrectionModel {
  GcnModel net;
  CorrectionConfig config;
  CorrectionSplit split;
};

// GNN_theta(base_scores, G); classification rows pass through row-softmax.
Tensor correct(const CorrectionModel& model, const SparseMatrix& a_hat,
               const Tensor& base_scores);

// Linear interpolation between ascending order statistics at level*n.
double diff_quantile(std::span<const double> values, double level);

// (1-alpha)(1+1/n) clamped to 1.
double inflated_level(double alpha, std::size_t n);

// Mean soft APS set size on cor_test, threshold from a differentiable
// quantile of true-label APS scores on cor_calib.
Var soft_set_size_loss(Tape& tape, Var mu_tilde_probs, const std::vector<int>& labels,
                       const CorrectionSplit& split, double alpha, double tau,
                       bool paper_sign = false);

// Mean conformalized interval length on cor_test plus the consistency
// regularizer toward the base quantile pair.
Var interval_length_loss(Tape& tape, Var mu_tilde, const Tensor& base_scores,
                         const std::vector<double>& targets, const CorrectionSplit& split,
                         double alpha, double reg_coeff);

CorrectionSplit make_correction_split(std::span<const NodeId> calib, double holdout_fraction,
                                      std::uint64_t seed);

CorrectionModel train_correction(const Graph& g, const Tensor& base_scores,
                                 const NodeData& data, const DataSplit& split,
                                 const CorrectionConfig& cfg);

std::string correction_to_json(const CorrectionModel& model);
CorrectionModel correction_from_json(const std::string& text);
void save_correction(const CorrectionModel& model, const std::filesystem::path& path);
CorrectionModel load_correction(const std::filesystem::path& path);

}  // namespace cfgnn
