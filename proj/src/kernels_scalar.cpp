#include <cmath>
#include <cstring>

#include "dietgraph/kernels.hpp"

// Reference kernels. Evaluation order is part of the contract: the SIMD
// variants replicate it lane-for-lane so that matmul, the elementwise ops and
// the Adam update are bit-identical across backends (the build disables FP
// contraction). sum/dot may be re-associated by SIMD variants and are only
// tolerance-equivalent.

namespace dietgraph::kernels::scalar {
namespace {

template <typename T>
void matmul_impl(const T* a, const T* b, T* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(T) * static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T aip = arow[p];
      if (aip == T(0)) continue;
      const T* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        crow[j] += aip * brow[j];
      }
    }
  }
}

template <typename T>
void add_impl(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void axpy_impl(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_impl(T alpha, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void relu_impl(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad_impl(const T* x, const T* g, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <typename T>
void leaky_relu_impl(T slope, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void leaky_relu_grad_impl(T slope, const T* x, const T* g, T* out,
                          std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] > T(0) ? g[i] : slope * g[i];
}

template <typename T>
void adam_step_impl(T* param, const T* grad, T* m, T* v, std::size_t n,
                    const AdamArgs<T>& args) {
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i] + args.weight_decay * param[i];
    m[i] = args.beta1 * m[i] + (T(1) - args.beta1) * g;
    v[i] = args.beta2 * v[i] + (T(1) - args.beta2) * (g * g);
    const T mhat = m[i] / args.bias_corr1;
    const T vhat = v[i] / args.bias_corr2;
    param[i] -= args.lr * mhat / (std::sqrt(vhat) + args.eps);
  }
}

template <typename T>
double sum_impl(const T* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <typename T>
double dot_impl(const T* a, const T* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
KernelTable<T> make_table() {
  KernelTable<T> t;
  t.matmul = &matmul_impl<T>;
  t.add = &add_impl<T>;
  t.axpy = &axpy_impl<T>;
  t.scale = &scale_impl<T>;
  t.relu = &relu_impl<T>;
  t.relu_grad = &relu_grad_impl<T>;
  t.leaky_relu = &leaky_relu_impl<T>;
  t.leaky_relu_grad = &leaky_relu_grad_impl<T>;
  t.adam_step = &adam_step_impl<T>;
  t.sum = &sum_impl<T>;
  t.dot = &dot_impl<T>;
  return t;
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  static const KernelTable<T> t = make_table<T>();
  return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace dietgraph::kernels::scalar
