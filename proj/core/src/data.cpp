#include "cfgnn/data.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "cfgnn/rng.hpp"

namespace cfgnn {

using json = nlohmann::json;

void validate_node_data(const Graph& g, const NodeData& data) {
  const std::size_t n = g.num_nodes();
  if (data.features.rows() != n) {
    throw std::invalid_argument("node data: feature rows (" +
                                std::to_string(data.features.rows()) +
                                ") do not match num_nodes (" + std::to_string(n) + ")");
  }
  if (data.task == Task::Classification) {
    if (data.labels.size() != n) {
      throw std::invalid_argument("node data: label count does not match num_nodes");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (data.labels[i] < 0 || static_cast<std::size_t>(data.labels[i]) >= data.num_classes) {
        throw std::invalid_argument("node data: class index " + std::to_string(data.labels[i]) +
                                    " at node " + std::to_string(i) + " not below num_classes=" +
                                    std::to_string(data.num_classes));
      }
    }
  } else {
    if (data.targets.size() != n) {
      throw std::invalid_argument("node data: target count does not match num_nodes");
    }
  }
}

DataSplit random_split(const Graph& g, const SplitConfig& cfg) {
  const std::size_t n = g.num_nodes();
  if (n == 0) throw std::invalid_argument("random_split: empty graph");
  if (!(cfg.train_frac > 0.0 && cfg.valid_frac > 0.0 &&
        cfg.train_frac + cfg.valid_frac < 1.0)) {
    throw std::invalid_argument("random_split: fractions must be in (0,1) with train+valid < 1");
  }

  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  rng.shuffle(order);

  const std::size_t n_train = static_cast<std::size_t>(cfg.train_frac * static_cast<double>(n));
  const std::size_t n_valid = static_cast<std::size_t>(cfg.valid_frac * static_cast<double>(n));
  const std::size_t n_rest = n - n_train - n_valid;
  const std::size_t n_calib = std::min(cfg.calib_cap, n_rest / 2);
  const std::size_t n_test = n_rest - n_calib;
  if (n_calib == 0 || n_test == 0) {
    throw std::invalid_argument("random_split: calibration or test set would be empty (n=" +
                                std::to_string(n) + ")");
  }

  DataSplit split;
  auto it = order.begin();
  split.train.assign(it, it + n_train);
  it += n_train;
  split.valid.assign(it, it + n_valid);
  it += n_valid;
  split.calib.assign(it, it + n_calib);
  it += n_calib;
  split.test.assign(it, order.end());
  return split;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail_at(const std::filesystem::path& file, std::size_t line,
                          const std::string& what) {
  throw std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& tok, const std::filesystem::path& file, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    fail_at(file, line, "cannot parse '" + tok + "' as a number");
  }
  return v;
}

long parse_long(const std::string& tok, const std::filesystem::path& file, std::size_t line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    fail_at(file, line, "cannot parse '" + tok + "' as an integer");
  }
  return v;
}

}  // namespace

void save_bundle(const Graph& g, const NodeData& data, const std::filesystem::path& dir) {
  validate_node_data(g, data);
  std::filesystem::create_directories(dir);

  {
    json meta;
    meta["task"] = data.task == Task::Classification ? "classification" : "regression";
    meta["num_nodes"] = g.num_nodes();
    meta["num_features"] = data.features.cols();
    if (data.task == Task::Classification) meta["num_classes"] = data.num_classes;
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (const auto& [u, v] : g.edge_list()) {
      out << u << "\t" << v << "\n";
    }
  }
  {
    std::ofstream out(dir / "features.tsv");
    const std::size_t d = data.features.cols();
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        if (j) out << "\t";
        out << format_double(data.features.at(i, j));
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      if (data.task == Task::Classification) {
        out << data.labels[i] << "\n";
      } else {
        out << format_double(data.targets[i]) << "\n";
      }
    }
  }
}

std::pair<Graph, NodeData> load_bundle(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw std::runtime_error(meta_path.string() + ": cannot open");
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error(meta_path.string() + ": " + e.what());
  }

  NodeData data;
  const std::string task = meta.at("task").get<std::string>();
  if (task == "classification") {
    data.task = Task::Classification;
    data.num_classes = meta.at("num_classes").get<std::size_t>();
  } else if (task == "regression") {
    data.task = Task::Regression;
  } else {
    throw std::runtime_error(meta_path.string() + ": unknown task '" + task + "'");
  }
  const std::size_t n = meta.at("num_nodes").get<std::size_t>();
  const std::size_t d = meta.at("num_features").get<std::size_t>();

  // edges.tsv
  std::vector<Edge> edges;
  {
    const auto path = dir / "edges.tsv";
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto toks = split_tabs(line);
      if (toks.size() != 2) fail_at(path, lineno, "expected 2 columns, got " + std::to_string(toks.size()));
      long u = parse_long(toks[0], path, lineno);
      long v = parse_long(toks[1], path, lineno);
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
        fail_at(path, lineno, "node index out of range (num_nodes=" + std::to_string(n) + ")");
      }
      edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  }
  Graph g = build_graph(edges, n);

  // features.tsv
  {
    const auto path = dir / "features.tsv";
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    data.features = Tensor::zeros(n, d);
    std::string line;
    std::size_t lineno = 0;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (row >= n) fail_at(path, lineno, "more rows than num_nodes=" + std::to_string(n));
      auto toks = split_tabs(line);
      if (toks.size() != d) {
        fail_at(path, lineno, "expected " + std::to_string(d) + " columns, got " +
                                  std::to_string(toks.size()));
      }
      for (std::size_t j = 0; j < d; ++j) {
        data.features.at(row, j) = parse_double(toks[j], path, lineno);
      }
      ++row;
    }
    if (row != n) {
      throw std::runtime_error(path.string() + ": expected " + std::to_string(n) +
                               " rows, got " + std::to_string(row));
    }
  }

  // labels.tsv
  {
    const auto path = dir / "labels.tsv";
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    std::string line;
    std::size_t lineno = 0;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (row >= n) fail_at(path, lineno, "more rows than num_nodes=" + std::to_string(n));
      if (data.task == Task::Classification) {
        long y = parse_long(line, path, lineno);
        if (y < 0 || static_cast<std::size_t>(y) >= data.num_classes) {
          fail_at(path, lineno, "class index " + std::to_string(y) + " not below num_classes=" +
                                    std::to_string(data.num_classes));
        }
        data.labels.push_back(static_cast<int>(y));
      } else {
        data.targets.push_back(parse_double(line, path, lineno));
      }
      ++row;
    }
    if (row != n) {
      throw std::runtime_error(path.string() + ": expected " + std::to_string(n) +
                               " rows, got " + std::to_string(row));
    }
  }

  validate_node_data(g, data);
  return {std::move(g), std::move(data)};
}

}  // namespace cfgnn
