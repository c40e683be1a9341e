#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace cfgnn {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

// Undirected simple graph in CSR form. Neighbor lists are strictly ascending,
// free of self-loops and duplicates, and symmetric (u in N(v) iff v in N(u)).
class Graph {
 public:
  Graph() = default;

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return neighbors_.size() / 2; }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {neighbors_.data() + offsets_[u], neighbors_.data() + offsets_[u + 1]};
  }
  std::size_t degree(NodeId u) const { return offsets_[u + 1] - offsets_[u]; }
  bool has_edge(NodeId u, NodeId v) const;

  const std::vector<std::size_t>& offsets() const { return offsets_; }
  const std::vector<NodeId>& adjacency() const { return neighbors_; }
  std::vector<Edge> edge_list() const;  // one entry per undirected edge, u < v

  friend Graph build_graph(std::span<const Edge> edges, std::size_t num_nodes);

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> neighbors_;
};

// Symmetrizes, deduplicates and drops self-loops.
Graph build_graph(std::span<const Edge> edges, std::size_t num_nodes);

// Square CSR matrix with rows sorted by column index.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  std::vector<NodeId> cols;
  std::vector<double> vals;
};

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
SparseMatrix normalized_adjacency(const Graph& g);

}  // namespace cfgnn
