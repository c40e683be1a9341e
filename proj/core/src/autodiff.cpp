#include "cfgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cfgnn {

const Tensor& Var::value() const { return tape->value(id); }

const Tensor& Tape::value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

int Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this) throw std::invalid_argument("tape: variable from another tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) +
                              " vs " + shape_string(b));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw std::invalid_argument(std::string(op) + ": unsupported shape " + shape_string(a));
}

}  // namespace

Tensor spmm_value_ordered(const SparseMatrix& s, const Tensor& x) {
  if (x.rows() != s.n) {
    throw std::invalid_argument("spmm: matrix is " + std::to_string(s.n) + "x" +
                                std::to_string(s.n) + " but dense has " +
                                std::to_string(x.rows()) + " rows");
  }
  const std::size_t d = x.cols();
  Tensor out({s.n, d});
  std::vector<std::size_t> order;
  for (std::size_t u = 0; u < s.n; ++u) {
    const std::size_t begin = s.offsets[u];
    const std::size_t end = s.offsets[u + 1];
    order.resize(end - begin);
    std::iota(order.begin(), order.end(), begin);
    // Canonical accumulation order: sort entries by coefficient, breaking
    // ties by the dense row contents, never by column index. The multiset of
    // (coefficient, row) pairs is invariant under node relabeling, so row
    // sums round identically however the nodes are numbered.
    std::sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
      if (s.vals[p] != s.vals[q]) return s.vals[p] < s.vals[q];
      const double* rp = x.data() + static_cast<std::size_t>(s.cols[p]) * d;
      const double* rq = x.data() + static_cast<std::size_t>(s.cols[q]) * d;
      for (std::size_t k = 0; k < d; ++k) {
        if (rp[k] != rq[k]) return rp[k] < rq[k];
      }
      return false;
    });
    double* dst = out.data() + u * d;
    for (std::size_t p : order) {
      const double w = s.vals[p];
      const double* src = x.data() + static_cast<std::size_t>(s.cols[p]) * d;
      for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
    }
  }
  return out;
}

Var Tape::leaf(Tensor value, bool trainable) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.trainable = trainable;
  return wrap(push(std::move(n)));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) shape_error("matmul", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.at(i, p);
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Node nd;
  nd.op = Op::MatMul;
  nd.a = a.id;
  nd.b = b.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::spmm(const SparseMatrix& s, Var x) {
  Node nd;
  nd.op = Op::SpMM;
  nd.a = x.id;
  nd.sp = &s;
  nd.value = spmm_value_ordered(s, node(x).value);
  return wrap(push(std::move(nd)));
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (!A.same_shape(B)) shape_error("add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  Node nd;
  nd.op = Op::Add;
  nd.a = a.id;
  nd.b = b.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (!A.same_shape(B)) shape_error("sub", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  Node nd;
  nd.op = Op::Sub;
  nd.a = a.id;
  nd.b = b.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (!A.same_shape(B)) shape_error("mul", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  Node nd;
  nd.op = Op::Mul;
  nd.a = a.id;
  nd.b = b.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::max(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (!A.same_shape(B)) shape_error("max", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(A[i], B[i]);
  Node nd;
  nd.op = Op::Max;
  nd.a = a.id;
  nd.b = b.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::scale(Var a, double c) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  Node nd;
  nd.op = Op::Scale;
  nd.a = a.id;
  nd.c0 = c;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::bias_add(Var a, Var bias) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(bias).value;
  if (A.rank() != 2 || B.rank() != 1 || B.size() != A.cols()) shape_error("bias_add", A, B);
  Tensor out = A;
  const std::size_t cols = A.cols();
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) += B[j];
  }
  Node nd;
  nd.op = Op::BiasAdd;
  nd.a = a.id;
  nd.b = bias.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::relu(Var a) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  Node nd;
  nd.op = Op::Relu;
  nd.a = a.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::sigmoid(Var a) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Node nd;
  nd.op = Op::Sigmoid;
  nd.a = a.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::log(Var a) {
  Tensor out = node(a).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  Node nd;
  nd.op = Op::Log;
  nd.a = a.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::row_softmax(Var a) {
  const Tensor& A = node(a).value;
  if (A.rank() != 2) shape_error("row_softmax", A);
  Tensor out = A;
  const std::size_t cols = A.cols();
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double* row = out.data() + i * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= z;
  }
  Node nd;
  nd.op = Op::RowSoftmax;
  nd.a = a.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::sum(Var a) {
  const Tensor& A = node(a).value;
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  Node nd;
  nd.op = Op::Sum;
  nd.a = a.id;
  nd.value = Tensor::scalar(s);
  return wrap(push(std::move(nd)));
}

Var Tape::mean(Var a) {
  const Tensor& A = node(a).value;
  if (A.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  Node nd;
  nd.op = Op::Mean;
  nd.a = a.id;
  nd.c0 = static_cast<double>(A.size());
  nd.value = Tensor::scalar(s / nd.c0);
  return wrap(push(std::move(nd)));
}

Var Tape::row_sort_desc(Var a) {
  const Tensor& A = node(a).value;
  if (A.rank() != 2) shape_error("row_sort_desc", A);
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor out({rows, cols});
  std::vector<std::uint32_t> perm(rows * cols);
  std::vector<std::uint32_t> order(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::iota(order.begin(), order.end(), 0);
    const double* row = A.data() + i * cols;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t p, std::uint32_t q) { return row[p] > row[q]; });
    for (std::size_t j = 0; j < cols; ++j) {
      perm[i * cols + j] = order[j];
      out.at(i, j) = row[order[j]];
    }
  }
  Node nd;
  nd.op = Op::RowSortDesc;
  nd.a = a.id;
  nd.value = std::move(out);
  nd.idx = std::move(perm);
  return wrap(push(std::move(nd)));
}

const std::vector<std::uint32_t>& Tape::sort_perm(Var sorted) const {
  const Node& nd = node(sorted);
  if (nd.op != Op::RowSortDesc) {
    throw std::invalid_argument("sort_perm: variable is not a row_sort_desc result");
  }
  return nd.idx;
}

Var Tape::row_cumsum(Var a) {
  const Tensor& A = node(a).value;
  if (A.rank() != 2) shape_error("row_cumsum", A);
  Tensor out = A;
  const std::size_t cols = A.cols();
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double* row = out.data() + i * cols;
    for (std::size_t j = 1; j < cols; ++j) row[j] += row[j - 1];
  }
  Node nd;
  nd.op = Op::RowCumsum;
  nd.a = a.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::gather_cols(Var a, std::vector<std::uint32_t> col_per_row) {
  const Tensor& A = node(a).value;
  if (A.rank() != 2 || col_per_row.size() != A.rows()) shape_error("gather_cols", A);
  Tensor out({A.rows()});
  for (std::size_t i = 0; i < A.rows(); ++i) {
    if (col_per_row[i] >= A.cols()) throw std::invalid_argument("gather_cols: column out of range");
    out[i] = A.at(i, col_per_row[i]);
  }
  Node nd;
  nd.op = Op::GatherCols;
  nd.a = a.id;
  nd.value = std::move(out);
  nd.idx = std::move(col_per_row);
  return wrap(push(std::move(nd)));
}

Var Tape::select_rows(Var a, std::vector<std::uint32_t> rows) {
  const Tensor& A = node(a).value;
  if (A.rank() < 1) shape_error("select_rows", A);
  const std::size_t cols = A.cols();
  Tensor out = A.rank() == 2 ? Tensor({rows.size(), cols}) : Tensor({rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows()) throw std::invalid_argument("select_rows: row out of range");
    const double* src = A.data() + static_cast<std::size_t>(rows[i]) * cols;
    double* dst = out.data() + i * cols;
    std::copy(src, src + cols, dst);
  }
  Node nd;
  nd.op = Op::SelectRows;
  nd.a = a.id;
  nd.value = std::move(out);
  nd.idx = std::move(rows);
  return wrap(push(std::move(nd)));
}

Var Tape::col_slice(Var a, std::size_t col) {
  const Tensor& A = node(a).value;
  if (A.rank() != 2 || col >= A.cols()) shape_error("col_slice", A);
  Tensor out({A.rows()});
  for (std::size_t i = 0; i < A.rows(); ++i) out[i] = A.at(i, col);
  Node nd;
  nd.op = Op::ColSlice;
  nd.a = a.id;
  nd.c0 = static_cast<double>(col);
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::quantile_interp(Var values, double level) {
  const Tensor& V = node(values).value;
  const std::size_t n = V.size();
  if (n == 0) throw std::invalid_argument("quantile_interp: empty values");
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t p, std::uint32_t q) { return V[p] < V[q]; });

  const double p = level * static_cast<double>(n);
  Node nd;
  nd.op = Op::QuantileInterp;
  nd.a = values.id;
  nd.c0 = level;
  double out;
  if (p <= 1.0) {
    out = V[order[0]];
    nd.idx = {order[0], order[0]};
    nd.aux = {1.0, 0.0};
  } else if (p >= static_cast<double>(n)) {
    out = V[order[n - 1]];
    nd.idx = {order[n - 1], order[n - 1]};
    nd.aux = {1.0, 0.0};
  } else {
    const std::size_t f = static_cast<std::size_t>(p);  // 1-based lower order stat
    const double lam = p - static_cast<double>(f);
    out = (1.0 - lam) * V[order[f - 1]] + lam * V[order[f]];
    nd.idx = {order[f - 1], order[f]};
    nd.aux = {1.0 - lam, lam};
  }
  nd.value = Tensor::scalar(out);
  return wrap(push(std::move(nd)));
}

Var Tape::cross_entropy_logits(Var logits, std::span<const int> labels) {
  const Tensor& Z = node(logits).value;
  if (Z.rank() != 2 || labels.size() != Z.rows()) shape_error("cross_entropy_logits", Z);
  const std::size_t m = Z.rows(), k = Z.cols();
  Node nd;
  nd.op = Op::CrossEntropy;
  nd.a = logits.id;
  nd.idx.assign(labels.begin(), labels.end());
  nd.aux.resize(m * k);  // cached softmax rows for backward
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = Z.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::invalid_argument("cross_entropy_logits: label out of range");
    }
    loss += lse - row[y];
    for (std::size_t j = 0; j < k; ++j) nd.aux[i * k + j] = std::exp(row[j] - lse);
  }
  nd.value = Tensor::scalar(loss / static_cast<double>(m));
  return wrap(push(std::move(nd)));
}

Var Tape::pinball(Var u, double beta) {
  const Tensor& U = node(u).value;
  Tensor out = U;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(beta * U[i], (beta - 1.0) * U[i]);
  }
  Node nd;
  nd.op = Op::Pinball;
  nd.a = u.id;
  nd.c0 = beta;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  const Tensor& A = node(a).value;
  Node nd;
  nd.op = Op::Dropout;
  nd.a = a.id;
  nd.c0 = 1.0 / (1.0 - rate);
  nd.aux.resize(A.size());
  Tensor out = A;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const bool keep = !rng.next_bernoulli(rate);
    nd.aux[i] = keep ? nd.c0 : 0.0;
    out[i] *= nd.aux[i];
  }
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

Var Tape::broadcast_sub(Var scalar, Var t) {
  const Tensor& S = node(scalar).value;
  const Tensor& T = node(t).value;
  if (!S.is_scalar()) shape_error("broadcast_sub", S, T);
  Tensor out = T;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = S[0] - T[i];
  Node nd;
  nd.op = Op::BroadcastSub;
  nd.a = scalar.id;
  nd.b = t.id;
  nd.value = std::move(out);
  return wrap(push(std::move(nd)));
}

std::vector<Tensor> Tape::backward(Var output) const {
  const Node& out_node = node(output);
  if (!out_node.value.is_scalar()) {
    throw std::invalid_argument("backward: output must be scalar, got " +
                                shape_string(out_node.value));
  }
  std::vector<Tensor> grads(nodes_.size());
  auto grad_ref = [&](int id) -> Tensor& {
    Tensor& g = grads[static_cast<std::size_t>(id)];
    if (g.size() == 0) g = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
    return g;
  };
  grad_ref(output.id)[0] = 1.0;

  for (int id = output.id; id >= 0; --id) {
    const Node& nd = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    if (g.size() == 0) continue;  // not on a path to the output

    switch (nd.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const Tensor& A = nodes_[nd.a].value;
        const Tensor& B = nodes_[nd.b].value;
        Tensor& ga = grad_ref(nd.a);
        Tensor& gb = grad_ref(nd.b);
        const std::size_t m = A.rows(), kk = A.cols(), n = B.cols();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < kk; ++p) {
            double acc = 0.0;
            const double* grow = g.data() + i * n;
            const double* brow = B.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga.at(i, p) += acc;
          }
        }
        for (std::size_t p = 0; p < kk; ++p) {
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += A.at(i, p) * g.at(i, j);
            gb.at(p, j) += acc;
          }
        }
        break;
      }
      case Op::SpMM: {
        // gradient w.r.t. dense input is S^T g; S is symmetric by contract
        Tensor gx = spmm_value_ordered(*nd.sp, g);
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < gx.size(); ++i) ga[i] += gx[i];
        break;
      }
      case Op::Add: {
        Tensor& ga = grad_ref(nd.a);
        Tensor& gb = grad_ref(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        Tensor& ga = grad_ref(nd.a);
        Tensor& gb = grad_ref(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = nodes_[nd.a].value;
        const Tensor& B = nodes_[nd.b].value;
        Tensor& ga = grad_ref(nd.a);
        Tensor& gb = grad_ref(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * B[i];
          gb[i] += g[i] * A[i];
        }
        break;
      }
      case Op::Max: {
        const Tensor& A = nodes_[nd.a].value;
        const Tensor& B = nodes_[nd.b].value;
        Tensor& ga = grad_ref(nd.a);
        Tensor& gb = grad_ref(nd.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (A[i] >= B[i]) {
            ga[i] += g[i];
          } else {
            gb[i] += g[i];
          }
        }
        break;
      }
      case Op::Scale: {
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += nd.c0 * g[i];
        break;
      }
      case Op::BiasAdd: {
        Tensor& ga = grad_ref(nd.a);
        Tensor& gb = grad_ref(nd.b);
        const std::size_t cols = nd.value.cols();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < nd.value.rows(); ++i) {
          for (std::size_t j = 0; j < cols; ++j) gb[j] += g.at(i, j);
        }
        break;
      }
      case Op::Relu: {
        const Tensor& A = nodes_[nd.a].value;
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (A[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Op::Sigmoid: {
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double s = nd.value[i];
          ga[i] += g[i] * s * (1.0 - s);
        }
        break;
      }
      case Op::Log: {
        const Tensor& A = nodes_[nd.a].value;
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / A[i];
        break;
      }
      case Op::RowSoftmax: {
        Tensor& ga = grad_ref(nd.a);
        const std::size_t cols = nd.value.cols();
        for (std::size_t i = 0; i < nd.value.rows(); ++i) {
          const double* s = nd.value.data() + i * cols;
          const double* gr = g.data() + i * cols;
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * s[j];
          double* dst = ga.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) dst[j] += s[j] * (gr[j] - dot);
        }
        break;
      }
      case Op::Sum: {
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case Op::Mean: {
        Tensor& ga = grad_ref(nd.a);
        const double gi = g[0] / nd.c0;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gi;
        break;
      }
      case Op::RowSortDesc: {
        Tensor& ga = grad_ref(nd.a);
        const std::size_t cols = nd.value.cols();
        for (std::size_t i = 0; i < nd.value.rows(); ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            ga.at(i, nd.idx[i * cols + j]) += g.at(i, j);
          }
        }
        break;
      }
      case Op::RowCumsum: {
        Tensor& ga = grad_ref(nd.a);
        const std::size_t cols = nd.value.cols();
        for (std::size_t i = 0; i < nd.value.rows(); ++i) {
          double suffix = 0.0;
          for (std::size_t j = cols; j-- > 0;) {
            suffix += g.at(i, j);
            ga.at(i, j) += suffix;
          }
        }
        break;
      }
      case Op::GatherCols: {
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < nd.value.size(); ++i) {
          ga.at(i, nd.idx[i]) += g[i];
        }
        break;
      }
      case Op::SelectRows: {
        Tensor& ga = grad_ref(nd.a);
        const std::size_t cols = nd.value.cols();
        for (std::size_t i = 0; i < nd.idx.size(); ++i) {
          double* dst = ga.data() + static_cast<std::size_t>(nd.idx[i]) * cols;
          const double* src = g.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::ColSlice: {
        Tensor& ga = grad_ref(nd.a);
        const std::size_t col = static_cast<std::size_t>(nd.c0);
        for (std::size_t i = 0; i < nd.value.size(); ++i) ga.at(i, col) += g[i];
        break;
      }
      case Op::QuantileInterp: {
        Tensor& ga = grad_ref(nd.a);
        if (nd.idx[0] == nd.idx[1]) {
          ga[nd.idx[0]] += g[0];
        } else {
          ga[nd.idx[0]] += nd.aux[0] * g[0];
          ga[nd.idx[1]] += nd.aux[1] * g[0];
        }
        break;
      }
      case Op::CrossEntropy: {
        Tensor& ga = grad_ref(nd.a);
        const std::size_t m = nodes_[nd.a].value.rows();
        const std::size_t k = nodes_[nd.a].value.cols();
        const double gi = g[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            double v = nd.aux[i * k + j];
            if (j == static_cast<std::size_t>(nd.idx[i])) v -= 1.0;
            ga.at(i, j) += gi * v;
          }
        }
        break;
      }
      case Op::Pinball: {
        const Tensor& U = nodes_[nd.a].value;
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * (U[i] > 0.0 ? nd.c0 : (U[i] < 0.0 ? nd.c0 - 1.0 : nd.c0));
        }
        break;
      }
      case Op::Dropout: {
        Tensor& ga = grad_ref(nd.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nd.aux[i];
        break;
      }
      case Op::BroadcastSub: {
        Tensor& ga = grad_ref(nd.a);
        Tensor& gb = grad_ref(nd.b);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          acc += g[i];
          gb[i] -= g[i];
        }
        ga[0] += acc;
        break;
      }
    }
  }
  return grads;
}

double grad_check(const std::function<Var(Tape&, std::span<const Var>)>& build,
                  const std::vector<Tensor>& point, double h) {
  auto evaluate = [&](const std::vector<Tensor>& at, std::vector<Tensor>* grads_out) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(at.size());
    for (const Tensor& t : at) leaves.push_back(tape.leaf(t, true));
    Var out = build(tape, leaves);
    const double value = out.value()[0];
    if (grads_out) *grads_out = tape.backward(out);
    return value;
  };

  std::vector<Tensor> grads;
  evaluate(point, &grads);

  double max_err = 0.0;
  for (std::size_t li = 0; li < point.size(); ++li) {
    const Tensor& analytic = grads[li];  // leaf ids are 0..k-1 by construction
    for (std::size_t c = 0; c < point[li].size(); ++c) {
      std::vector<Tensor> plus = point;
      std::vector<Tensor> minus = point;
      plus[li][c] += h;
      minus[li][c] -= h;
      const double fp = evaluate(plus, nullptr);
      const double fm = evaluate(minus, nullptr);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.size() ? analytic[c] : 0.0;
      const double err =
          std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace cfgnn
