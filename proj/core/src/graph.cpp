#include "cfgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cfgnn {

bool Graph::has_edge(NodeId u, NodeId v) const {
  auto nbrs = neighbors(u);
  return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

std::vector<Edge> Graph::edge_list() const {
  std::vector<Edge> edges;
  edges.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes(); ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) edges.emplace_back(u, v);
    }
  }
  return edges;
}

Graph build_graph(std::span<const Edge> edges, std::size_t num_nodes) {
  for (const auto& [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) {
      throw std::invalid_argument("build_graph: edge (" + std::to_string(u) + "," +
                                  std::to_string(v) + ") out of range (num_nodes=" +
                                  std::to_string(num_nodes) + ")");
    }
  }

  std::vector<std::vector<NodeId>> adj(num_nodes);
  for (const auto& [u, v] : edges) {
    if (u == v) continue;
    adj[u].push_back(v);
    adj[v].push_back(u);
  }

  Graph g;
  g.offsets_.assign(num_nodes + 1, 0);
  for (std::size_t u = 0; u < num_nodes; ++u) {
    auto& nbrs = adj[u];
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    g.offsets_[u + 1] = g.offsets_[u] + nbrs.size();
  }
  g.neighbors_.reserve(g.offsets_[num_nodes]);
  for (std::size_t u = 0; u < num_nodes; ++u) {
    g.neighbors_.insert(g.neighbors_.end(), adj[u].begin(), adj[u].end());
  }
  return g;
}

SparseMatrix normalized_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt_deg(n);
  for (NodeId u = 0; u < n; ++u) {
    inv_sqrt_deg[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1));
  }

  SparseMatrix a;
  a.n = n;
  a.offsets.assign(n + 1, 0);
  for (NodeId u = 0; u < n; ++u) {
    a.offsets[u + 1] = a.offsets[u] + g.degree(u) + 1;  // + self-loop
  }
  a.cols.resize(a.offsets[n]);
  a.vals.resize(a.offsets[n]);
  for (NodeId u = 0; u < n; ++u) {
    std::size_t pos = a.offsets[u];
    bool placed_diag = false;
    for (NodeId v : g.neighbors(u)) {
      if (!placed_diag && v > u) {
        a.cols[pos] = u;
        a.vals[pos] = inv_sqrt_deg[u] * inv_sqrt_deg[u];
        ++pos;
        placed_diag = true;
      }
      a.cols[pos] = v;
      a.vals[pos] = inv_sqrt_deg[u] * inv_sqrt_deg[v];
      ++pos;
    }
    if (!placed_diag) {
      a.cols[pos] = u;
      a.vals[pos] = inv_sqrt_deg[u] * inv_sqrt_deg[u];
    }
  }
  return a;
}

}  // namespace cfgnn
