#include "cfgnn/gcn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cfgnn/adam.hpp"

namespace cfgnn {

using json = nlohmann::json;

GcnModel init_gcn(std::size_t input_dim, std::size_t hidden, std::size_t layers,
                  std::size_t output_dim, Head head, Rng& rng) {
  if (layers < 1) throw std::invalid_argument("init_gcn: need at least one layer");
  if (head == Head::Quantile && output_dim != 2) {
    throw std::invalid_argument("init_gcn: quantile head requires exactly 2 outputs");
  }
  GcnModel model;
  model.head = head;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t out = (l + 1 == layers) ? output_dim : hidden;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));  // Xavier uniform
    Tensor w({in, out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.next_uniform(-bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(std::vector<std::size_t>{out});
    in = out;
  }
  return model;
}

GcnTapeForward gcn_forward_tape(Tape& tape, const GcnModel& model, const SparseMatrix& a_hat,
                                const Tensor& x, double dropout_rate, Rng* dropout_rng) {
  if (x.cols() != model.input_dim()) {
    throw std::invalid_argument("gcn_forward: feature dim " + std::to_string(x.cols()) +
                                " does not match model input dim " +
                                std::to_string(model.input_dim()));
  }
  GcnTapeForward fwd;
  Var h = tape.constant(x);
  const std::size_t layers = model.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    fwd.weights.push_back(tape.leaf(model.weights[l], true));
    fwd.biases.push_back(tape.leaf(model.biases[l], true));
    if (dropout_rng != nullptr && dropout_rate > 0.0) {
      h = tape.dropout(h, dropout_rate, *dropout_rng);
    }
    h = tape.bias_add(tape.matmul(tape.spmm(a_hat, h), fwd.weights[l]), fwd.biases[l]);
    if (l + 1 < layers) h = tape.relu(h);
  }
  fwd.output = h;
  return fwd;
}

Tensor gcn_forward(const GcnModel& model, const SparseMatrix& a_hat, const Tensor& x) {
  Tape tape;
  return gcn_forward_tape(tape, model, a_hat, x, 0.0, nullptr).output.value();
}

Tensor predict_scores(const GcnModel& model, const SparseMatrix& a_hat, const Tensor& x) {
  Tape tape;
  Var out = gcn_forward_tape(tape, model, a_hat, x, 0.0, nullptr).output;
  if (model.head == Head::Softmax) out = tape.row_softmax(out);
  return out.value();
}

namespace {

struct EpochLoss {
  Var train_loss;
  GcnTapeForward fwd;
};

template <class LossFn>
GcnModel train_gcn(const Graph& g, const NodeData& data, const DataSplit& split,
                   const TrainConfig& cfg, Head head, std::size_t output_dim,
                   LossFn&& loss_on) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (split.train.empty() || split.valid.empty()) {
    throw std::invalid_argument("train: train and valid sets must be non-empty");
  }
  validate_node_data(g, data);

  const SparseMatrix a_hat = normalized_adjacency(g);
  Rng rng(cfg.seed);
  GcnModel model = init_gcn(data.features.cols(), cfg.hidden, cfg.layers, output_dim,
                            head, rng);
  model.alpha = head == Head::Quantile ? cfg.alpha : 0.0;

  auto params = [&]() {
    std::vector<Tensor*> ptrs;
    for (auto& w : model.weights) ptrs.push_back(&w);
    for (auto& b : model.biases) ptrs.push_back(&b);
    return ptrs;
  }();
  std::vector<Tensor> param_view(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) param_view[i] = *params[i];
  AdamState opt = AdamState::for_params(param_view, cfg.learning_rate, cfg.weight_decay);

  GcnModel best = model;
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    GcnTapeForward fwd = gcn_forward_tape(tape, model, a_hat, data.features,
                                          cfg.dropout, &rng);
    Var loss = loss_on(tape, fwd.output, split.train);
    const double train_loss = loss.value()[0];
    if (!std::isfinite(train_loss)) {
      throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    const auto grads = tape.backward(loss);

    std::vector<Tensor> grad_list;
    for (Var w : fwd.weights) grad_list.push_back(grads[static_cast<std::size_t>(w.id)]);
    for (Var b : fwd.biases) grad_list.push_back(grads[static_cast<std::size_t>(b.id)]);
    std::vector<Tensor> param_list;
    for (Tensor* p : params) param_list.push_back(std::move(*p));
    adam_step(param_list, grad_list, opt);
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(param_list[i]);

    // validation in eval mode
    Tape vtape;
    Var vout = gcn_forward_tape(vtape, model, a_hat, data.features, 0.0, nullptr).output;
    const double valid_loss = loss_on(vtape, vout, split.valid).value()[0];
    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return best;
}

std::vector<std::uint32_t> to_u32(std::span<const NodeId> ids) {
  return {ids.begin(), ids.end()};
}

}  // namespace

GcnModel train_classifier(const Graph& g, const NodeData& data, const DataSplit& split,
                          const TrainConfig& cfg) {
  if (data.task != Task::Classification) {
    throw std::invalid_argument("train_classifier: data is not a classification task");
  }
  return train_gcn(g, data, split, cfg, Head::Softmax, data.num_classes,
                   [&](Tape& tape, Var out, std::span<const NodeId> nodes) {
                     std::vector<int> labels;
                     labels.reserve(nodes.size());
                     for (NodeId v : nodes) labels.push_back(data.labels[v]);
                     return tape.cross_entropy_logits(tape.select_rows(out, to_u32(nodes)),
                                                      labels);
                   });
}

GcnModel train_quantile_regressor(const Graph& g, const NodeData& data,
                                  const DataSplit& split, const TrainConfig& cfg) {
  if (data.task != Task::Regression) {
    throw std::invalid_argument("train_quantile_regressor: data is not a regression task");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw std::invalid_argument("train_quantile_regressor: alpha must be in (0,1)");
  }
  return train_gcn(
      g, data, split, cfg, Head::Quantile, 2,
      [&](Tape& tape, Var out, std::span<const NodeId> nodes) {
        std::vector<double> y;
        y.reserve(nodes.size());
        for (NodeId v : nodes) y.push_back(data.targets[v]);
        Var sel = tape.select_rows(out, to_u32(nodes));
        Var target = tape.constant(Tensor::from_vector(std::move(y)));
        Var lo = tape.col_slice(sel, 0);
        Var hi = tape.col_slice(sel, 1);
        Var loss_lo = tape.mean(tape.pinball(tape.sub(target, lo), cfg.alpha / 2.0));
        Var loss_hi = tape.mean(tape.pinball(tape.sub(target, hi), 1.0 - cfg.alpha / 2.0));
        return tape.add(loss_lo, loss_hi);
      });
}

std::string model_to_json(const GcnModel& model) {
  json j;
  std::vector<std::size_t> dims;
  dims.push_back(model.input_dim());
  for (const Tensor& w : model.weights) dims.push_back(w.cols());
  j["dims"] = dims;
  j["head"] = model.head == Head::Softmax ? "softmax" : "quantile";
  if (model.head == Head::Quantile) j["alpha"] = model.alpha;
  json weights = json::array();
  json biases = json::array();
  for (const Tensor& w : model.weights) weights.push_back(w.values());
  for (const Tensor& b : model.biases) biases.push_back(b.values());
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j.dump();
}

GcnModel model_from_json(const std::string& text) {
  json j = json::parse(text);
  GcnModel model;
  const std::string head = j.at("head").get<std::string>();
  if (head == "softmax") {
    model.head = Head::Softmax;
  } else if (head == "quantile") {
    model.head = Head::Quantile;
    model.alpha = j.at("alpha").get<double>();
  } else {
    throw std::runtime_error("model: unknown head '" + head + "'");
  }
  const auto dims = j.at("dims").get<std::vector<std::size_t>>();
  if (dims.size() < 2) throw std::runtime_error("model: dims must list input and output");
  const auto weights = j.at("weights");
  const auto biases = j.at("biases");
  if (weights.size() != dims.size() - 1 || biases.size() != dims.size() - 1) {
    throw std::runtime_error("model: layer count does not match dims");
  }
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    auto wv = weights[l].get<std::vector<double>>();
    if (wv.size() != dims[l] * dims[l + 1]) {
      throw std::runtime_error("model: weight size mismatch at layer " + std::to_string(l));
    }
    model.weights.push_back(Tensor::from_matrix(dims[l], dims[l + 1], std::move(wv)));
    auto bv = biases[l].get<std::vector<double>>();
    if (bv.size() != dims[l + 1]) {
      throw std::runtime_error("model: bias size mismatch at layer " + std::to_string(l));
    }
    model.biases.push_back(Tensor::from_vector(std::move(bv)));
  }
  return model;
}

void save_model(const GcnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << model_to_json(model) << "\n";
}

GcnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return model_from_json(ss.str());
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace cfgnn
