#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dietgraph/rng.hpp"
#include "dietgraph/sparse.hpp"
#include "dietgraph/tensor.hpp"

namespace dietgraph {

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Define-by-run reverse-mode tape. A fresh tape is built for every training
// iteration; parameters live outside it and are attached with leaf().
// Node creation order is a topological order, so backward() is a single
// reverse sweep. Every op checks its output for non-finite values and throws
// Error naming the op, which turns silent divergence into a hard stop.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Attaches caller-owned storage without copying. The tensor must outlive
  // the tape. Gradients accumulate on the tape and are read back via grad().
  Var leaf(const Tensor<T>& external, bool needs_grad = true);
  // A temporary would dangle; pass constant() a value instead.
  Var leaf(Tensor<T>&& external, bool needs_grad = true) = delete;
  // Tape-owned value that takes no gradient.
  Var constant(Tensor<T> value);

  const Tensor<T>& val(Var v) const;
  const Tensor<T>& grad(Var v) const;

  // c = a * b, shapes (m x k)(k x n).
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  // Elementwise product.
  Var mul(Var a, Var b);
  // bias is 1 x n, broadcast over rows of a.
  Var add_bias(Var a, Var bias);
  Var concat_cols(Var a, Var b);
  Var concat_rows(const std::vector<Var>& parts);
  // Half-open column range [j0, j1).
  Var slice_cols(Var a, int j0, int j1);
  Var slice_rows(Var a, int i0, int i1);
  // out row r = a row idx[r]. Rows may repeat.
  Var gather_rows(Var a, std::vector<int> idx);
  // out (n_rows wide as a) with out[idx[r]] += a[r]; untouched rows stay 0.
  Var scatter_rows(Var a, std::vector<int> idx, int n_rows);
  // m x 1 sums over columns.
  Var row_sum(Var a);
  Var sum_all(Var a);
  Var scalar_scale(Var a, double c);
  // Constant per-row weights: out row i = w[i] * a row i.
  Var row_scale(Var a, std::vector<double> w);
  // s is 1 x 1; out = s * a with gradients to both.
  Var scalar_mul(Var s, Var a);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var elu(Var a, double alpha = 1.0);
  Var tanh_(Var a);
  Var sigmoid(Var a);
  Var row_softmax(Var a);

  // scores is E x C. seg_offsets (S+1 entries, ascending, covering all E
  // rows) partitions rows into contiguous segments; softmax is taken per
  // column within each segment. Empty segments are an error.
  Var segment_softmax(Var scores, std::vector<int> seg_offsets);
  // alpha is E x 1, values N x d. Segment s of the output (S x d) is
  // sum over its rows e of alpha[e] * values[value_idx[e]]. Fusing the
  // weighted gather avoids materialising an E x d intermediate.
  Var segment_weighted_sum(Var alpha, Var values, std::vector<int> value_idx,
                           std::vector<int> seg_offsets);
  // out[e] = dot(a row idx_a[e], b row idx_b[e]), shape E x 1.
  Var pair_dot(Var a, Var b, std::vector<int> idx_a, std::vector<int> idx_b);

  // Inverted dropout: kept entries scale by 1/(1-rate). Identity when not
  // training or rate == 0.
  Var dropout(Var a, double rate, RngStream& rng, bool training);
  // Constant sparse matrix times dense var.
  Var spmm(const Csr<T>& m, Var x);

  // Weighted mean cross-entropy over rows from raw logits (N x K).
  // row_weights fold the evaluation mask and any class weights together;
  // rows with weight 0 contribute nothing. Result is 1 x 1.
  Var softmax_xent(Var logits, std::vector<int> labels,
                   std::vector<double> row_weights);
  // Weighted mean binary cross-entropy on probabilities (N x 1), clamped
  // away from 0/1. Gradient is zero where the clamp is active.
  Var bce(Var probs, std::vector<double> targets, std::vector<double> weights);

  // loss must be 1 x 1. Seeds its gradient with 1 and sweeps the tape in
  // reverse. Leaves not on any path to the loss end with zero gradient.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;                  // owned unless external is set
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    std::function<void()> back;      // empty for leaves/constants
    bool needs_grad = false;
  };

  const Tensor<T>& node_val(int i) const {
    const Node& n = nodes_[i];
    return n.external ? *n.external : n.value;
  }
  Tensor<T>& node_grad(int i) { return nodes_[i].grad; }
  Var push(Tensor<T> value, bool needs_grad, std::function<void()> back,
           const char* op);
  void check(Var v) const;

  std::vector<Node> nodes_;
  bool swept_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dietgraph
