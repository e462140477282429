#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "dietgraph/autograd.hpp"
#include "dietgraph/kernels.hpp"

// Backend note: ops routed through the kernel table (matmul, add, axpy,
// scale, relu, leaky_relu) are bit-identical across backends by the kernel
// contract. Every other loop here is plain scalar code with double
// accumulation in a fixed order, so a whole training run produces the same
// bits no matter which backend is active.

namespace dietgraph {

namespace {

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  const T* p = t.data();
  for (std::size_t i = 0, n = t.size(); i < n; ++i) {
    if (!std::isfinite(static_cast<double>(p[i])))
      throw Error(std::string("non-finite value produced by ") + op);
  }
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

void check_offsets(const std::vector<int>& off, int total, const char* op) {
  if (off.size() < 2 || off.front() != 0 || off.back() != total)
    throw Error(std::string(op) + ": segment offsets must cover all rows");
  for (std::size_t s = 1; s < off.size(); ++s) {
    if (off[s] < off[s - 1])
      throw Error(std::string(op) + ": segment offsets must be ascending");
    if (off[s] == off[s - 1])
      throw Error(std::string(op) + ": empty segment");
  }
}

}  // namespace

template <typename T>
void Tape<T>::check(Var v) const {
  if (v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
    throw Error("var does not belong to this tape");
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool needs_grad, std::function<void()> back,
                  const char* op) {
  check_finite(value, op);
  Node n;
  n.grad = Tensor<T>(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::leaf(const Tensor<T>& external, bool needs_grad) {
  check_finite(external, "leaf");
  Node n;
  n.external = &external;
  n.grad = Tensor<T>(external.rows(), external.cols());
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, {}, "constant");
}

template <typename T>
const Tensor<T>& Tape<T>::val(Var v) const {
  check(v);
  return node_val(v.idx);
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  check(v);
  return nodes_[v.idx].grad;
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& av = node_val(a.idx);
  const Tensor<T>& bv = node_val(b.idx);
  if (av.cols() != bv.rows()) throw Error("matmul: inner dimension mismatch");
  const int m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out(m, n);
  const auto& K = kernels::active<T>();
  K.matmul(av.data(), bv.data(), out.data(), m, k, n);
  const bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "matmul");
  const int ia = a.idx, ib = b.idx, io = outv.idx;
  nodes_[io].back = [this, ia, ib, io, m, k, n]() {
    const auto& Kb = kernels::active<T>();
    const Tensor<T>& gout = nodes_[io].grad;
    const Tensor<T> bt = transpose(node_val(ib));
    Tensor<T> tmp(m, k);
    Kb.matmul(gout.data(), bt.data(), tmp.data(), m, n, k);
    Kb.axpy(T(1), tmp.data(), node_grad(ia).data(), tmp.size());
    const Tensor<T> at = transpose(node_val(ia));
    Tensor<T> tmpb(k, n);
    Kb.matmul(at.data(), gout.data(), tmpb.data(), k, m, n);
    Kb.axpy(T(1), tmpb.data(), node_grad(ib).data(), tmpb.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& av = node_val(a.idx);
  const Tensor<T>& bv = node_val(b.idx);
  if (!av.same_shape(bv)) throw Error("add: shape mismatch");
  Tensor<T> out(av.rows(), av.cols());
  const auto& K = kernels::active<T>();
  K.add(av.data(), bv.data(), out.data(), out.size());
  const bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "add");
  const int ia = a.idx, ib = b.idx, io = outv.idx;
  nodes_[io].back = [this, ia, ib, io]() {
    const auto& Kb = kernels::active<T>();
    const Tensor<T>& g = nodes_[io].grad;
    Kb.axpy(T(1), g.data(), node_grad(ia).data(), g.size());
    Kb.axpy(T(1), g.data(), node_grad(ib).data(), g.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& av = node_val(a.idx);
  const Tensor<T>& bv = node_val(b.idx);
  if (!av.same_shape(bv)) throw Error("sub: shape mismatch");
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = av.data()[i] - bv.data()[i];
  const bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "sub");
  const int ia = a.idx, ib = b.idx, io = outv.idx;
  nodes_[io].back = [this, ia, ib, io]() {
    const auto& Kb = kernels::active<T>();
    const Tensor<T>& g = nodes_[io].grad;
    Kb.axpy(T(1), g.data(), node_grad(ia).data(), g.size());
    Kb.axpy(T(-1), g.data(), node_grad(ib).data(), g.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& av = node_val(a.idx);
  const Tensor<T>& bv = node_val(b.idx);
  if (!av.same_shape(bv)) throw Error("mul: shape mismatch");
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = av.data()[i] * bv.data()[i];
  const bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "mul");
  const int ia = a.idx, ib = b.idx, io = outv.idx;
  nodes_[io].back = [this, ia, ib, io]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& avv = node_val(ia);
    const Tensor<T>& bvv = node_val(ib);
    Tensor<T>& ga = node_grad(ia);
    Tensor<T>& gb = node_grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data()[i] += g.data()[i] * bvv.data()[i];
      gb.data()[i] += g.data()[i] * avv.data()[i];
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::add_bias(Var a, Var bias) {
  check(a);
  check(bias);
  const Tensor<T>& av = node_val(a.idx);
  const Tensor<T>& bv = node_val(bias.idx);
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw Error("add_bias: bias must be 1 x cols");
  Tensor<T> out(av.rows(), av.cols());
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j) + bv.at(0, j);
  const bool ng = nodes_[a.idx].needs_grad || nodes_[bias.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "add_bias");
  const int ia = a.idx, ib = bias.idx, io = outv.idx;
  nodes_[io].back = [this, ia, ib, io]() {
    const auto& Kb = kernels::active<T>();
    const Tensor<T>& g = nodes_[io].grad;
    Kb.axpy(T(1), g.data(), node_grad(ia).data(), g.size());
    Tensor<T>& gb = node_grad(ib);
    for (int j = 0; j < g.cols(); ++j) {
      double acc = 0.0;
      for (int i = 0; i < g.rows(); ++i)
        acc += static_cast<double>(g.at(i, j));
      gb.at(0, j) += static_cast<T>(acc);
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::concat_cols(Var a, Var b) {
  check(a);
  check(b);
  const Tensor<T>& av = node_val(a.idx);
  const Tensor<T>& bv = node_val(b.idx);
  if (av.rows() != bv.rows()) throw Error("concat_cols: row count mismatch");
  const int ca = av.cols(), cb = bv.cols();
  Tensor<T> out(av.rows(), ca + cb);
  for (int i = 0; i < av.rows(); ++i) {
    std::memcpy(out.row(i), av.row(i), sizeof(T) * ca);
    std::memcpy(out.row(i) + ca, bv.row(i), sizeof(T) * cb);
  }
  const bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "concat_cols");
  const int ia = a.idx, ib = b.idx, io = outv.idx;
  nodes_[io].back = [this, ia, ib, io, ca, cb]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    Tensor<T>& gb = node_grad(ib);
    for (int i = 0; i < g.rows(); ++i) {
      for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
      for (int j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  int total = 0;
  const int cols = node_val(parts[0].idx).cols();
  bool ng = false;
  for (Var p : parts) {
    check(p);
    const Tensor<T>& v = node_val(p.idx);
    if (v.cols() != cols) throw Error("concat_rows: column count mismatch");
    total += v.rows();
    ng = ng || nodes_[p.idx].needs_grad;
  }
  Tensor<T> out(total, cols);
  int r = 0;
  for (Var p : parts) {
    const Tensor<T>& v = node_val(p.idx);
    std::memcpy(out.row(r), v.data(), sizeof(T) * v.size());
    r += v.rows();
  }
  std::vector<int> idxs;
  for (Var p : parts) idxs.push_back(p.idx);
  Var outv = push(std::move(out), ng, {}, "concat_rows");
  const int io = outv.idx;
  nodes_[io].back = [this, idxs = std::move(idxs), io]() {
    const Tensor<T>& g = nodes_[io].grad;
    int r0 = 0;
    for (int ip : idxs) {
      Tensor<T>& gp = node_grad(ip);
      const auto& Kb = kernels::active<T>();
      Kb.axpy(T(1), g.row(r0), gp.data(), gp.size());
      r0 += gp.rows();
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::slice_cols(Var a, int j0, int j1) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  if (j0 < 0 || j1 > av.cols() || j0 >= j1)
    throw Error("slice_cols: bad range");
  Tensor<T> out(av.rows(), j1 - j0);
  for (int i = 0; i < av.rows(); ++i)
    std::memcpy(out.row(i), av.row(i) + j0, sizeof(T) * (j1 - j0));
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "slice_cols");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, j0]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga.at(i, j0 + j) += g.at(i, j);
  };
  return outv;
}

template <typename T>
Var Tape<T>::slice_rows(Var a, int i0, int i1) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  if (i0 < 0 || i1 > av.rows() || i0 >= i1)
    throw Error("slice_rows: bad range");
  Tensor<T> out(i1 - i0, av.cols());
  std::memcpy(out.data(), av.row(i0), sizeof(T) * out.size());
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "slice_rows");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, i0]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    const auto& Kb = kernels::active<T>();
    Kb.axpy(T(1), g.data(), ga.row(i0), g.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::gather_rows(Var a, std::vector<int> idx) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  for (int i : idx)
    if (i < 0 || i >= av.rows()) throw Error("gather_rows: index out of range");
  Tensor<T> out(static_cast<int>(idx.size()), av.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::memcpy(out.row(static_cast<int>(r)), av.row(idx[r]),
                sizeof(T) * av.cols());
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "gather_rows");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, idx = std::move(idx)]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* grow = g.row(static_cast<int>(r));
      T* garow = ga.row(idx[r]);
      for (int j = 0; j < g.cols(); ++j) garow[j] += grow[j];
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::scatter_rows(Var a, std::vector<int> idx, int n_rows) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  if (static_cast<int>(idx.size()) != av.rows())
    throw Error("scatter_rows: index count must equal rows");
  for (int i : idx)
    if (i < 0 || i >= n_rows) throw Error("scatter_rows: index out of range");
  Tensor<T> out(n_rows, av.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const T* arow = av.row(static_cast<int>(r));
    T* orow = out.row(idx[r]);
    for (int j = 0; j < av.cols(); ++j) orow[j] += arow[j];
  }
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "scatter_rows");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, idx = std::move(idx)]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* grow = g.row(idx[r]);
      T* garow = ga.row(static_cast<int>(r));
      for (int j = 0; j < g.cols(); ++j) garow[j] += grow[j];
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::row_sum(Var a) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), 1);
  for (int i = 0; i < av.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < av.cols(); ++j)
      acc += static_cast<double>(av.at(i, j));
    out.at(i, 0) = static_cast<T>(acc);
  }
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "row_sum");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    for (int i = 0; i < ga.rows(); ++i) {
      const T gi = g.at(i, 0);
      T* garow = ga.row(i);
      for (int j = 0; j < ga.cols(); ++j) garow[j] += gi;
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::sum_all(Var a) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i)
    acc += static_cast<double>(av.data()[i]);
  Tensor<T> out(1, 1);
  out.at(0, 0) = static_cast<T>(acc);
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "sum_all");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io]() {
    const T g = nodes_[io].grad.at(0, 0);
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
  };
  return outv;
}

template <typename T>
Var Tape<T>::scalar_scale(Var a, double c) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  const T cv = static_cast<T>(c);
  kernels::active<T>().scale(cv, av.data(), out.data(), out.size());
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "scalar_scale");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, cv]() {
    const Tensor<T>& g = nodes_[io].grad;
    kernels::active<T>().axpy(cv, g.data(), node_grad(ia).data(), g.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::row_scale(Var a, std::vector<double> w) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  if (static_cast<int>(w.size()) != av.rows())
    throw Error("row_scale: weight count must equal rows");
  Tensor<T> out(av.rows(), av.cols());
  for (int i = 0; i < av.rows(); ++i) {
    const T wi = static_cast<T>(w[i]);
    const T* arow = av.row(i);
    T* orow = out.row(i);
    for (int j = 0; j < av.cols(); ++j) orow[j] = wi * arow[j];
  }
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "row_scale");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, w = std::move(w)]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    for (int i = 0; i < g.rows(); ++i) {
      const T wi = static_cast<T>(w[i]);
      const T* grow = g.row(i);
      T* garow = ga.row(i);
      for (int j = 0; j < g.cols(); ++j) garow[j] += wi * grow[j];
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::scalar_mul(Var s, Var a) {
  check(s);
  check(a);
  const Tensor<T>& sv = node_val(s.idx);
  if (sv.rows() != 1 || sv.cols() != 1)
    throw Error("scalar_mul: scale must be 1 x 1");
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  const T s00 = sv.at(0, 0);
  kernels::active<T>().scale(s00, av.data(), out.data(), out.size());
  const bool ng = nodes_[s.idx].needs_grad || nodes_[a.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "scalar_mul");
  const int is = s.idx, ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, is, ia, io]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& avv = node_val(ia);
    const T s00b = node_val(is).at(0, 0);
    kernels::active<T>().axpy(s00b, g.data(), node_grad(ia).data(), g.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      acc += static_cast<double>(g.data()[i]) *
             static_cast<double>(avv.data()[i]);
    node_grad(is).at(0, 0) += static_cast<T>(acc);
  };
  return outv;
}

template <typename T>
Var Tape<T>::relu(Var a) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  kernels::active<T>().relu(av.data(), out.data(), out.size());
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "relu");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io]() {
    const auto& Kb = kernels::active<T>();
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& avv = node_val(ia);
    Tensor<T> tmp(g.rows(), g.cols());
    Kb.relu_grad(avv.data(), g.data(), tmp.data(), g.size());
    Kb.axpy(T(1), tmp.data(), node_grad(ia).data(), g.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::leaky_relu(Var a, double slope) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  const T s = static_cast<T>(slope);
  kernels::active<T>().leaky_relu(s, av.data(), out.data(), out.size());
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "leaky_relu");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, s]() {
    const auto& Kb = kernels::active<T>();
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& avv = node_val(ia);
    Tensor<T> tmp(g.rows(), g.cols());
    Kb.leaky_relu_grad(s, avv.data(), g.data(), tmp.data(), g.size());
    Kb.axpy(T(1), tmp.data(), node_grad(ia).data(), g.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::elu(Var a, double alpha) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  const T al = static_cast<T>(alpha);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T x = av.data()[i];
    out.data()[i] = x > T(0) ? x : al * static_cast<T>(std::expm1(static_cast<double>(x)));
  }
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "elu");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, al]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& avv = node_val(ia);
    const Tensor<T>& y = node_val(io);
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T d = avv.data()[i] > T(0) ? T(1) : y.data()[i] + al;
      ga.data()[i] += g.data()[i] * d;
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::tanh_(Var a) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i)
    out.data()[i] = static_cast<T>(std::tanh(static_cast<double>(av.data()[i])));
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "tanh");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& y = node_val(io);
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] += g.data()[i] * (T(1) - y.data()[i] * y.data()[i]);
  };
  return outv;
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = static_cast<double>(av.data()[i]);
    const double y = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                              : std::exp(x) / (1.0 + std::exp(x));
    out.data()[i] = static_cast<T>(y);
  }
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "sigmoid");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& y = node_val(io);
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] += g.data()[i] * y.data()[i] * (T(1) - y.data()[i]);
  };
  return outv;
}

template <typename T>
Var Tape<T>::row_softmax(Var a) {
  check(a);
  const Tensor<T>& av = node_val(a.idx);
  Tensor<T> out(av.rows(), av.cols());
  for (int i = 0; i < av.rows(); ++i) {
    const T* x = av.row(i);
    T* y = out.row(i);
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < av.cols(); ++j)
      m = std::max(m, static_cast<double>(x[j]));
    double s = 0.0;
    for (int j = 0; j < av.cols(); ++j) {
      const double e = std::exp(static_cast<double>(x[j]) - m);
      y[j] = static_cast<T>(e);
      s += e;
    }
    for (int j = 0; j < av.cols(); ++j)
      y[j] = static_cast<T>(static_cast<double>(y[j]) / s);
  }
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "row_softmax");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& y = node_val(io);
    Tensor<T>& ga = node_grad(ia);
    for (int i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (int j = 0; j < g.cols(); ++j)
        dot += static_cast<double>(g.at(i, j)) * static_cast<double>(y.at(i, j));
      for (int j = 0; j < g.cols(); ++j)
        ga.at(i, j) += static_cast<T>(
            static_cast<double>(y.at(i, j)) *
            (static_cast<double>(g.at(i, j)) - dot));
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::segment_softmax(Var scores, std::vector<int> seg_offsets) {
  check(scores);
  const Tensor<T>& sv = node_val(scores.idx);
  check_offsets(seg_offsets, sv.rows(), "segment_softmax");
  Tensor<T> out(sv.rows(), sv.cols());
  const int C = sv.cols();
  for (std::size_t s = 0; s + 1 < seg_offsets.size(); ++s) {
    const int e0 = seg_offsets[s], e1 = seg_offsets[s + 1];
    for (int c = 0; c < C; ++c) {
      double m = -std::numeric_limits<double>::infinity();
      for (int e = e0; e < e1; ++e)
        m = std::max(m, static_cast<double>(sv.at(e, c)));
      double sum = 0.0;
      for (int e = e0; e < e1; ++e) {
        const double ex = std::exp(static_cast<double>(sv.at(e, c)) - m);
        out.at(e, c) = static_cast<T>(ex);
        sum += ex;
      }
      for (int e = e0; e < e1; ++e)
        out.at(e, c) = static_cast<T>(static_cast<double>(out.at(e, c)) / sum);
    }
  }
  Var outv =
      push(std::move(out), nodes_[scores.idx].needs_grad, {}, "segment_softmax");
  const int ia = scores.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, off = std::move(seg_offsets), C]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& y = node_val(io);
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      const int e0 = off[s], e1 = off[s + 1];
      for (int c = 0; c < C; ++c) {
        double dot = 0.0;
        for (int e = e0; e < e1; ++e)
          dot += static_cast<double>(g.at(e, c)) *
                 static_cast<double>(y.at(e, c));
        for (int e = e0; e < e1; ++e)
          ga.at(e, c) += static_cast<T>(
              static_cast<double>(y.at(e, c)) *
              (static_cast<double>(g.at(e, c)) - dot));
      }
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::segment_weighted_sum(Var alpha, Var values,
                                  std::vector<int> value_idx,
                                  std::vector<int> seg_offsets) {
  check(alpha);
  check(values);
  const Tensor<T>& av = node_val(alpha.idx);
  const Tensor<T>& vv = node_val(values.idx);
  if (av.cols() != 1) throw Error("segment_weighted_sum: alpha must be E x 1");
  if (static_cast<int>(value_idx.size()) != av.rows())
    throw Error("segment_weighted_sum: one value index per alpha row");
  check_offsets(seg_offsets, av.rows(), "segment_weighted_sum");
  for (int i : value_idx)
    if (i < 0 || i >= vv.rows())
      throw Error("segment_weighted_sum: value index out of range");
  const int S = static_cast<int>(seg_offsets.size()) - 1;
  const int d = vv.cols();
  Tensor<T> out(S, d);
  for (int s = 0; s < S; ++s) {
    T* orow = out.row(s);
    for (int e = seg_offsets[s]; e < seg_offsets[s + 1]; ++e) {
      const T w = av.at(e, 0);
      const T* vrow = vv.row(value_idx[e]);
      for (int j = 0; j < d; ++j) orow[j] += w * vrow[j];
    }
  }
  const bool ng =
      nodes_[alpha.idx].needs_grad || nodes_[values.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "segment_weighted_sum");
  const int ia = alpha.idx, iv = values.idx, io = outv.idx;
  nodes_[io].back = [this, ia, iv, io, idx = std::move(value_idx),
                     off = std::move(seg_offsets), d]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& avv = node_val(ia);
    const Tensor<T>& vvv = node_val(iv);
    Tensor<T>& ga = node_grad(ia);
    Tensor<T>& gv = node_grad(iv);
    const int S = static_cast<int>(off.size()) - 1;
    for (int s = 0; s < S; ++s) {
      const T* grow = g.row(s);
      for (int e = off[s]; e < off[s + 1]; ++e) {
        const T* vrow = vvv.row(idx[e]);
        T* gvrow = gv.row(idx[e]);
        const T w = avv.at(e, 0);
        double acc = 0.0;
        for (int j = 0; j < d; ++j) {
          acc += static_cast<double>(grow[j]) * static_cast<double>(vrow[j]);
          gvrow[j] += w * grow[j];
        }
        ga.at(e, 0) += static_cast<T>(acc);
      }
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::pair_dot(Var a, Var b, std::vector<int> idx_a,
                      std::vector<int> idx_b) {
  check(a);
  check(b);
  const Tensor<T>& av = node_val(a.idx);
  const Tensor<T>& bv = node_val(b.idx);
  if (av.cols() != bv.cols()) throw Error("pair_dot: column count mismatch");
  if (idx_a.size() != idx_b.size())
    throw Error("pair_dot: index arrays must have equal length");
  for (int i : idx_a)
    if (i < 0 || i >= av.rows()) throw Error("pair_dot: index out of range");
  for (int i : idx_b)
    if (i < 0 || i >= bv.rows()) throw Error("pair_dot: index out of range");
  const int E = static_cast<int>(idx_a.size());
  const int d = av.cols();
  Tensor<T> out(E, 1);
  for (int e = 0; e < E; ++e) {
    const T* ar = av.row(idx_a[e]);
    const T* br = bv.row(idx_b[e]);
    double acc = 0.0;
    for (int j = 0; j < d; ++j)
      acc += static_cast<double>(ar[j]) * static_cast<double>(br[j]);
    out.at(e, 0) = static_cast<T>(acc);
  }
  const bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Var outv = push(std::move(out), ng, {}, "pair_dot");
  const int ia = a.idx, ib = b.idx, io = outv.idx;
  nodes_[io].back = [this, ia, ib, io, ja = std::move(idx_a),
                     jb = std::move(idx_b), d]() {
    const Tensor<T>& g = nodes_[io].grad;
    const Tensor<T>& avv = node_val(ia);
    const Tensor<T>& bvv = node_val(ib);
    Tensor<T>& ga = node_grad(ia);
    Tensor<T>& gb = node_grad(ib);
    for (std::size_t e = 0; e < ja.size(); ++e) {
      const T ge = g.at(static_cast<int>(e), 0);
      const T* ar = avv.row(ja[e]);
      const T* br = bvv.row(jb[e]);
      T* gar = ga.row(ja[e]);
      T* gbr = gb.row(jb[e]);
      for (int j = 0; j < d; ++j) {
        gar[j] += ge * br[j];
        gbr[j] += ge * ar[j];
      }
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::dropout(Var a, double rate, RngStream& rng, bool training) {
  check(a);
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw Error("dropout: rate must be < 1");
  const Tensor<T>& av = node_val(a.idx);
  auto factor = std::make_shared<Tensor<T>>(av.rows(), av.cols());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T f = rng.uniform() < rate ? T(0) : keep_scale;
    factor->data()[i] = f;
    out.data()[i] = f * av.data()[i];
  }
  Var outv = push(std::move(out), nodes_[a.idx].needs_grad, {}, "dropout");
  const int ia = a.idx, io = outv.idx;
  nodes_[io].back = [this, ia, io, factor]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T>& ga = node_grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data()[i] += g.data()[i] * factor->data()[i];
  };
  return outv;
}

template <typename T>
Var Tape<T>::spmm(const Csr<T>& m, Var x) {
  check(x);
  const Tensor<T>& xv = node_val(x.idx);
  Tensor<T> out(m.rows, xv.cols());
  dietgraph::spmm(m, xv, out);
  auto mt = std::make_shared<Csr<T>>(m.transposed());
  Var outv = push(std::move(out), nodes_[x.idx].needs_grad, {}, "spmm");
  const int ix = x.idx, io = outv.idx;
  nodes_[io].back = [this, ix, io, mt]() {
    const Tensor<T>& g = nodes_[io].grad;
    Tensor<T> tmp(mt->rows, g.cols());
    dietgraph::spmm(*mt, g, tmp);
    kernels::active<T>().axpy(T(1), tmp.data(), node_grad(ix).data(),
                              tmp.size());
  };
  return outv;
}

template <typename T>
Var Tape<T>::softmax_xent(Var logits, std::vector<int> labels,
                          std::vector<double> row_weights) {
  check(logits);
  const Tensor<T>& lv = node_val(logits.idx);
  const int N = lv.rows(), K = lv.cols();
  if (static_cast<int>(labels.size()) != N ||
      static_cast<int>(row_weights.size()) != N)
    throw Error("softmax_xent: need one label and weight per row");
  double wsum = 0.0;
  for (int i = 0; i < N; ++i) {
    if (row_weights[i] < 0.0) throw Error("softmax_xent: negative weight");
    if (row_weights[i] > 0.0 && (labels[i] < 0 || labels[i] >= K))
      throw Error("softmax_xent: label out of range");
    wsum += row_weights[i];
  }
  if (wsum <= 0.0) throw Error("softmax_xent: no rows with positive weight");

  auto probs = std::make_shared<Tensor<T>>(N, K);
  double loss = 0.0;
  for (int i = 0; i < N; ++i) {
    const T* x = lv.row(i);
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < K; ++j) m = std::max(m, static_cast<double>(x[j]));
    double s = 0.0;
    for (int j = 0; j < K; ++j) s += std::exp(static_cast<double>(x[j]) - m);
    const double lse = m + std::log(s);
    T* prow = probs->row(i);
    for (int j = 0; j < K; ++j)
      prow[j] = static_cast<T>(std::exp(static_cast<double>(x[j]) - lse));
    if (row_weights[i] > 0.0)
      loss += row_weights[i] * (lse - static_cast<double>(x[labels[i]]));
  }
  Tensor<T> out(1, 1);
  out.at(0, 0) = static_cast<T>(loss / wsum);
  Var outv =
      push(std::move(out), nodes_[logits.idx].needs_grad, {}, "softmax_xent");
  const int il = logits.idx, io = outv.idx;
  nodes_[io].back = [this, il, io, probs, labels = std::move(labels),
                     w = std::move(row_weights), wsum]() {
    const T g = nodes_[io].grad.at(0, 0);
    Tensor<T>& gl = node_grad(il);
    const int K = gl.cols();
    for (int i = 0; i < gl.rows(); ++i) {
      if (w[i] == 0.0) continue;
      const T scale = static_cast<T>(static_cast<double>(g) * w[i] / wsum);
      const T* prow = probs->row(i);
      T* grow = gl.row(i);
      for (int j = 0; j < K; ++j) {
        const T target = j == labels[i] ? T(1) : T(0);
        grow[j] += scale * (prow[j] - target);
      }
    }
  };
  return outv;
}

template <typename T>
Var Tape<T>::bce(Var probs, std::vector<double> targets,
                 std::vector<double> weights) {
  check(probs);
  const Tensor<T>& pv = node_val(probs.idx);
  const int N = pv.rows();
  if (pv.cols() != 1) throw Error("bce: probabilities must be N x 1");
  if (static_cast<int>(targets.size()) != N ||
      static_cast<int>(weights.size()) != N)
    throw Error("bce: need one target and weight per row");
  const double eps = sizeof(T) == sizeof(float) ? 1e-7 : 1e-12;
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw Error("bce: negative weight");
    wsum += w;
  }
  if (wsum <= 0.0) throw Error("bce: no rows with positive weight");
  double loss = 0.0;
  for (int i = 0; i < N; ++i) {
    if (weights[i] == 0.0) continue;
    const double t = targets[i];
    if (t < 0.0 || t > 1.0) throw Error("bce: target outside [0, 1]");
    const double p =
        std::clamp(static_cast<double>(pv.at(i, 0)), eps, 1.0 - eps);
    loss += weights[i] * -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  Tensor<T> out(1, 1);
  out.at(0, 0) = static_cast<T>(loss / wsum);
  Var outv = push(std::move(out), nodes_[probs.idx].needs_grad, {}, "bce");
  const int ip = probs.idx, io = outv.idx;
  nodes_[io].back = [this, ip, io, t = std::move(targets),
                     w = std::move(weights), wsum, eps]() {
    const double g = static_cast<double>(nodes_[io].grad.at(0, 0));
    const Tensor<T>& pvv = node_val(ip);
    Tensor<T>& gp = node_grad(ip);
    for (int i = 0; i < pvv.rows(); ++i) {
      if (w[i] == 0.0) continue;
      const double p = static_cast<double>(pvv.at(i, 0));
      if (p < eps || p > 1.0 - eps) continue;  // clamp active: flat
      const double d = (p - t[i]) / (p * (1.0 - p));
      gp.at(i, 0) += static_cast<T>(g * w[i] / wsum * d);
    }
  };
  return outv;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  check(loss);
  if (swept_) throw Error("backward: tape already swept");
  swept_ = true;
  const Tensor<T>& lv = node_val(loss.idx);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw Error("backward: loss must be 1 x 1");
  nodes_[loss.idx].grad.at(0, 0) = T(1);
  for (int i = loss.idx; i >= 0; --i) {
    if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dietgraph
