#pragma once

#include <cstddef>
#include <vector>

#include "dietgraph/error.hpp"
#include "dietgraph/tensor.hpp"

namespace dietgraph {

// Compressed sparse row matrix with constant entries (adjacency weights are
// never trained). offsets has rows+1 entries.
template <typename T>
struct Csr {
  int rows = 0;
  int cols = 0;
  std::vector<std::size_t> offsets;
  std::vector<int> col_idx;
  std::vector<T> vals;

  std::size_t nnz() const { return col_idx.size(); }

  Csr transposed() const {
    Csr t;
    t.rows = cols;
    t.cols = rows;
    t.offsets.assign(static_cast<std::size_t>(cols) + 1, 0);
    for (int c : col_idx) ++t.offsets[static_cast<std::size_t>(c) + 1];
    for (std::size_t i = 1; i < t.offsets.size(); ++i)
      t.offsets[i] += t.offsets[i - 1];
    t.col_idx.resize(nnz());
    t.vals.resize(nnz());
    std::vector<std::size_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
    for (int r = 0; r < rows; ++r) {
      for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) {
        const std::size_t q = cursor[col_idx[p]]++;
        t.col_idx[q] = r;
        t.vals[q] = vals[p];
      }
    }
    return t;
  }
};

// out (rows x d) = m * x. out is overwritten.
template <typename T>
void spmm(const Csr<T>& m, const Tensor<T>& x, Tensor<T>& out) {
  if (x.rows() != m.cols) throw Error("spmm: inner dimension mismatch");
  if (out.rows() != m.rows || out.cols() != x.cols())
    throw Error("spmm: output shape mismatch");
  const int d = x.cols();
  out.fill(T(0));
  for (int r = 0; r < m.rows; ++r) {
    T* orow = out.row(r);
    for (std::size_t p = m.offsets[r]; p < m.offsets[r + 1]; ++p) {
      const T w = m.vals[p];
      const T* xrow = x.row(m.col_idx[p]);
      for (int j = 0; j < d; ++j) orow[j] += w * xrow[j];
    }
  }
}

}  // namespace dietgraph
