#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cfgnn/graph.hpp"
#include "cfgnn/rng.hpp"
#include "cfgnn/tensor.hpp"

namespace cfgnn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& value() const;
};

// Reverse-mode tape. Ops record into topological order as they are built;
// backward() walks the record once in reverse and is const (idempotent).
//
// The sparse product accumulates each output entry over neighbor
// contributions sorted by value rather than by column index, which makes the
// forward pass bit-identical under any relabeling of graph nodes.
class Tape {
 public:
  Var leaf(Tensor value, bool trainable = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var matmul(Var a, Var b);
  Var spmm(const SparseMatrix& s, Var x);  // s must be symmetric and outlive the tape
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var max(Var a, Var b);
  Var scale(Var a, double c);
  Var bias_add(Var a, Var bias);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  Var row_softmax(Var a);
  Var sum(Var a);
  Var mean(Var a);

  // Rows sorted descending, probability ties broken by ascending column; the
  // permutation is frozen for backward (gradient flows through the gather).
  Var row_sort_desc(Var a);
  const std::vector<std::uint32_t>& sort_perm(Var sorted) const;

  Var row_cumsum(Var a);
  Var gather_cols(Var a, std::vector<std::uint32_t> col_per_row);
  Var select_rows(Var a, std::vector<std::uint32_t> rows);
  Var col_slice(Var a, std::size_t col);

  // Linear interpolation between ascending order statistics at position
  // level * n (1-based); gradient lands on the participating entries only.
  Var quantile_interp(Var values, double level);

  // mean over rows of logsumexp(z) - z[label]
  Var cross_entropy_logits(Var logits, std::span<const int> labels);

  // elementwise max(beta*u, (beta-1)*u)
  Var pinball(Var u, double beta);

  Var dropout(Var a, double rate, Rng& rng);  // inverted dropout, train-time only
  Var broadcast_sub(Var scalar, Var t);       // scalar - t, elementwise

  std::vector<Tensor> backward(Var output) const;  // grads indexed by node id

  const Tensor& value(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Leaf, MatMul, SpMM, Add, Sub, Mul, Max, Scale, BiasAdd, Relu, Sigmoid, Log,
    RowSoftmax, Sum, Mean, RowSortDesc, RowCumsum, GatherCols, SelectRows,
    ColSlice, QuantileInterp, CrossEntropy, Pinball, Dropout, BroadcastSub,
  };

  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    Tensor value;
    const SparseMatrix* sp = nullptr;
    std::vector<std::uint32_t> idx;
    std::vector<double> aux;
    double c0 = 0.0;
    double c1 = 0.0;
    bool trainable = false;
  };

  int push(Node node);
  Var wrap(int id) { return Var{this, id}; }
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

// Compares backward() against central differences (f(x+h)-f(x-h))/2h on every
// coordinate of every leaf; returns the max over coordinates of
// |a-b| / max(1e-12, |a|+|b|). The builder receives one trainable leaf per
// point entry and must be a pure function of their values.
double grad_check(const std::function<Var(Tape&, std::span<const Var>)>& build,
                  const std::vector<Tensor>& point, double h);

// Relabeling-stable sparse * dense used by the SpMM op; exposed for reuse.
Tensor spmm_value_ordered(const SparseMatrix& s, const Tensor& x);

}  // namespace cfgnn
