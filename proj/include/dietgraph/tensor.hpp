#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "dietgraph/error.hpp"

namespace dietgraph {

// Dense row-major 2D array. All linear algebra goes through the kernel
// layer; this type only owns storage and shape.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * cols, T(0)) {
    if (rows < 0 || cols < 0) throw Error("tensor shape must be non-negative");
  }

  static Tensor full(int rows, int cols, T value) {
    Tensor t(rows, cols);
    for (auto& x : t.data_) x = value;
    return t;
  }

  // Row-major literal, e.g. from_rows(2, 2, {1, 2, 3, 4}).
  static Tensor from_rows(int rows, int cols, std::initializer_list<T> vals) {
    Tensor t(rows, cols);
    if (vals.size() != t.data_.size())
      throw Error("tensor literal size mismatch");
    std::size_t i = 0;
    for (T v : vals) t.data_[i++] = v;
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  T& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  const T& at(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  T* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  const T* row(int i) const {
    return data_.data() + static_cast<std::size_t>(i) * cols_;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace dietgraph
