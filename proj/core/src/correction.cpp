#include "cfgnn/correction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cfgnn/adam.hpp"
#include "cfgnn/rng.hpp"

namespace cfgnn {

using json = nlohmann::json;

Tensor correct(const CorrectionModel& model, const SparseMatrix& a_hat,
               const Tensor& base_scores) {
  if (base_scores.cols() != model.net.input_dim()) {
    throw std::invalid_argument("correct: base score width " +
                                std::to_string(base_scores.cols()) +
                                " does not match correction input dim " +
                                std::to_string(model.net.input_dim()));
  }
  Tape tape;
  Var out = gcn_forward_tape(tape, model.net, a_hat, base_scores, 0.0, nullptr).output;
  if (model.net.head == Head::Softmax) out = tape.row_softmax(out);
  return out.value();
}

double inflated_level(double alpha, std::size_t n) {
  if (n == 0) throw std::invalid_argument("inflated_level: empty calibration set");
  const double level = (1.0 - alpha) * (1.0 + 1.0 / static_cast<double>(n));
  return std::min(1.0, level);
}

double diff_quantile(std::span<const double> values, double level) {
  Tape tape;
  Var v = tape.constant(Tensor::from_vector({values.begin(), values.end()}));
  return tape.quantile_interp(v, level).value()[0];
}

namespace {

std::vector<std::uint32_t> to_u32(std::span<const NodeId> ids) {
  return {ids.begin(), ids.end()};
}

// positions of the true labels inside each row's descending sort order
std::vector<std::uint32_t> label_positions(const Tape& tape, Var sorted,
                                           std::span<const int> labels) {
  const auto& perm = tape.sort_perm(sorted);
  const std::size_t cols = sorted.value().cols();
  std::vector<std::uint32_t> pos(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (perm[i * cols + j] == static_cast<std::uint32_t>(labels[i])) {
        pos[i] = static_cast<std::uint32_t>(j);
        break;
      }
    }
  }
  return pos;
}

}  // namespace

Var soft_set_size_loss(Tape& tape, Var mu_tilde_probs, const std::vector<int>& labels,
                       const CorrectionSplit& split, double alpha, double tau,
                       bool paper_sign) {
  if (split.cor_calib.empty() || split.cor_test.empty()) {
    throw std::invalid_argument("soft_set_size_loss: correction calib/test must be non-empty");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("soft_set_size_loss: tau must be positive");

  // eta from the true-label APS scores on cor_calib
  Var cal = tape.select_rows(mu_tilde_probs, to_u32(split.cor_calib));
  Var cal_sorted = tape.row_sort_desc(cal);
  Var cal_cums = tape.row_cumsum(cal_sorted);
  std::vector<int> cal_labels;
  cal_labels.reserve(split.cor_calib.size());
  for (NodeId v : split.cor_calib) cal_labels.push_back(labels[v]);
  Var cal_scores = tape.gather_cols(cal_cums, label_positions(tape, cal_sorted, cal_labels));
  Var eta = tape.quantile_interp(cal_scores, inflated_level(alpha, split.cor_calib.size()));

  // soft membership over every class on cor_test
  Var test = tape.select_rows(mu_tilde_probs, to_u32(split.cor_test));
  Var test_scores = tape.row_cumsum(tape.row_sort_desc(test));  // V(X_i, k), sorted order
  Var margin = tape.broadcast_sub(eta, test_scores);            // eta - V
  if (paper_sign) margin = tape.scale(margin, -1.0);
  return tape.mean(tape.sigmoid(tape.scale(margin, 1.0 / tau)));
}

Var interval_length_loss(Tape& tape, Var mu_tilde, const Tensor& base_scores,
                         const std::vector<double>& targets, const CorrectionSplit& split,
                         double alpha, double reg_coeff) {
  if (split.cor_calib.empty() || split.cor_test.empty()) {
    throw std::invalid_argument("interval_length_loss: correction calib/test must be non-empty");
  }

  // eta from CQR scores of mu_tilde on cor_calib
  Var cal = tape.select_rows(mu_tilde, to_u32(split.cor_calib));
  std::vector<double> y;
  y.reserve(split.cor_calib.size());
  for (NodeId v : split.cor_calib) y.push_back(targets[v]);
  Var target = tape.constant(Tensor::from_vector(std::move(y)));
  Var cal_lo = tape.col_slice(cal, 0);
  Var cal_hi = tape.col_slice(cal, 1);
  Var scores = tape.max(tape.sub(cal_lo, target), tape.sub(target, cal_hi));
  Var eta = tape.quantile_interp(scores, inflated_level(alpha, split.cor_calib.size()));

  // mean conformalized length on cor_test: (hi + eta) - (lo - eta)
  Var test = tape.select_rows(mu_tilde, to_u32(split.cor_test));
  Var lo = tape.col_slice(test, 0);
  Var hi = tape.col_slice(test, 1);
  Var loss = tape.add(tape.mean(tape.sub(hi, lo)), tape.scale(eta, 2.0));

  if (reg_coeff != 0.0) {
    Tensor base_lo({split.cor_test.size()});
    Tensor base_hi({split.cor_test.size()});
    for (std::size_t i = 0; i < split.cor_test.size(); ++i) {
      base_lo[i] = base_scores.at(split.cor_test[i], 0);
      base_hi[i] = base_scores.at(split.cor_test[i], 1);
    }
    Var d_lo = tape.sub(lo, tape.constant(std::move(base_lo)));
    Var d_hi = tape.sub(hi, tape.constant(std::move(base_hi)));
    Var reg = tape.add(tape.mean(tape.mul(d_lo, d_lo)), tape.mean(tape.mul(d_hi, d_hi)));
    loss = tape.add(loss, tape.scale(reg, reg_coeff));
  }
  return loss;
}

CorrectionSplit make_correction_split(std::span<const NodeId> calib, double holdout_fraction,
                                      std::uint64_t seed) {
  const std::size_t withheld =
      static_cast<std::size_t>(holdout_fraction * static_cast<double>(calib.size()));
  if (withheld < 4) {
    throw std::invalid_argument(
        "correction split: holdout would withhold " + std::to_string(withheld) +
        " nodes; need at least 4 (2 each for cor-calib and cor-test)");
  }
  if (withheld >= calib.size()) {
    throw std::invalid_argument(
        "correction split: no calibration nodes left for final conformal calibration");
  }
  std::vector<NodeId> order(calib.begin(), calib.end());
  Rng rng(seed);
  rng.shuffle(order);
  CorrectionSplit split;
  const std::size_t half = withheld / 2;
  split.cor_calib.assign(order.begin(), order.begin() + half);
  split.cor_test.assign(order.begin() + half, order.begin() + withheld);
  split.remaining_calib.assign(order.begin() + withheld, order.end());
  return split;
}

CorrectionModel train_correction(const Graph& g, const Tensor& base_scores,
                                 const NodeData& data, const DataSplit& split,
                                 const CorrectionConfig& cfg) {
  if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0)) {
    throw std::invalid_argument("train_correction: holdout_fraction must be in (0,1)");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw std::invalid_argument("train_correction: alpha must be in (0,1)");
  }
  if (cfg.epochs < 1) throw std::invalid_argument("train_correction: epochs must be >= 1");
  const std::size_t width = data.task == Task::Classification ? data.num_classes : 2;
  if (base_scores.cols() != width || base_scores.rows() != g.num_nodes()) {
    throw std::invalid_argument("train_correction: base score shape does not match task");
  }

  const SparseMatrix a_hat = normalized_adjacency(g);
  Rng rng(cfg.seed);
  CorrectionModel model;
  model.config = cfg;
  model.net = init_gcn(width, cfg.hidden, cfg.layers, width,
                       data.task == Task::Classification ? Head::Softmax : Head::Quantile,
                       rng);
  model.split = make_correction_split(split.calib, cfg.holdout_fraction, rng.next_u64());

  auto params = [&]() {
    std::vector<Tensor*> ptrs;
    for (auto& w : model.net.weights) ptrs.push_back(&w);
    for (auto& b : model.net.biases) ptrs.push_back(&b);
    return ptrs;
  }();
  std::vector<Tensor> shapes(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) shapes[i] = *params[i];
  AdamState opt = AdamState::for_params(shapes, cfg.learning_rate, cfg.weight_decay);

  std::vector<Tensor> best_weights = model.net.weights;
  std::vector<Tensor> best_biases = model.net.biases;
  double best_loss = std::numeric_limits<double>::infinity();

  CorrectionSplit epoch_split = model.split;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.resample_holdout_per_epoch && epoch > 0) {
      std::vector<NodeId> withheld = model.split.cor_calib;
      withheld.insert(withheld.end(), model.split.cor_test.begin(),
                      model.split.cor_test.end());
      Rng shuffle_rng(cfg.seed ^ (0x9E3779B97F4A7C15ull + epoch));
      shuffle_rng.shuffle(withheld);
      const std::size_t half = withheld.size() / 2;
      epoch_split.cor_calib.assign(withheld.begin(), withheld.begin() + half);
      epoch_split.cor_test.assign(withheld.begin() + half, withheld.end());
    }

    Tape tape;
    GcnTapeForward fwd =
        gcn_forward_tape(tape, model.net, a_hat, base_scores, 0.0, nullptr);
    Var out = fwd.output;
    Var loss = data.task == Task::Classification
                   ? soft_set_size_loss(tape, tape.row_softmax(out), data.labels,
                                        epoch_split, cfg.alpha, cfg.tau, cfg.paper_sign)
                   : interval_length_loss(tape, out, base_scores, data.targets,
                                          epoch_split, cfg.alpha, cfg.reg_coeff);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("train_correction: non-finite loss at epoch " +
                               std::to_string(epoch));
    }
    if (loss_value < best_loss) {
      best_loss = loss_value;
      best_weights = model.net.weights;
      best_biases = model.net.biases;
    }

    const auto grads = tape.backward(loss);
    std::vector<Tensor> grad_list;
    for (Var w : fwd.weights) grad_list.push_back(grads[static_cast<std::size_t>(w.id)]);
    for (Var b : fwd.biases) grad_list.push_back(grads[static_cast<std::size_t>(b.id)]);
    std::vector<Tensor> param_list;
    for (Tensor* p : params) param_list.push_back(std::move(*p));
    adam_step(param_list, grad_list, opt);
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(param_list[i]);
  }

  model.net.weights = std::move(best_weights);
  model.net.biases = std::move(best_biases);
  return model;
}

std::string correction_to_json(const CorrectionModel& model) {
  json j = json::parse(model_to_json(model.net));
  j["gamma"] = model.config.holdout_fraction;
  j["tau"] = model.config.tau;
  j["reg_coeff"] = model.config.reg_coeff;
  j["alpha"] = model.config.alpha;
  j["cor_calib"] = model.split.cor_calib;
  j["cor_test"] = model.split.cor_test;
  return j.dump();
}

CorrectionModel correction_from_json(const std::string& text) {
  json j = json::parse(text);
  CorrectionModel model;
  model.net = model_from_json(text);
  model.config.holdout_fraction = j.at("gamma").get<double>();
  model.config.tau = j.at("tau").get<double>();
  model.config.reg_coeff = j.at("reg_coeff").get<double>();
  model.config.alpha = j.at("alpha").get<double>();
  model.split.cor_calib = j.at("cor_calib").get<std::vector<NodeId>>();
  model.split.cor_test = j.at("cor_test").get<std::vector<NodeId>>();
  return model;
}

void save_correction(const CorrectionModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << correction_to_json(model) << "\n";
}

CorrectionModel load_correction(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return correction_from_json(ss.str());
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace cfgnn
