#pragma once

#include <cstddef>
#include <string>

namespace dietgraph::kernels {

// Runtime-selected backend for the dense arithmetic inner loops. The scalar
// kernels are the reference; SIMD variants must produce bit-identical results
// wherever they keep the scalar evaluation order (matmul, elementwise, adam)
// and agree within a small relative tolerance where lanes reorder a reduction
// (sum, dot). Equivalence is enforced by tests/test_kernels.cpp.
enum class Backend { scalar, avx2 };

// Backend chosen at first use: the DIETGRAPH_KERNELS environment variable
// (scalar|avx2|auto) if set, otherwise the best the CPU supports.
Backend active_backend();
// Force a backend. Throws std::runtime_error if the CPU lacks it.
void force_backend(Backend b);
// Parse "scalar"/"avx2"/"auto" and force accordingly.
void force_backend(const std::string& name);
const char* backend_name(Backend b);
bool cpu_supports_avx2();

template <typename T>
struct AdamArgs {
  T lr;
  T beta1;
  T beta2;
  T eps;
  T weight_decay;
  // Precomputed 1 - beta^t bias corrections for the current step.
  T bias_corr1;
  T bias_corr2;
};

template <typename T>
struct KernelTable {
  // c (m x n) = a (m x k) * b (k x n). c is overwritten.
  void (*matmul)(const T* a, const T* b, T* c, int m, int k, int n);
  // out = a + b
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // out = alpha * x
  void (*scale)(T alpha, const T* x, T* out, std::size_t n);
  void (*relu)(const T* x, T* out, std::size_t n);
  // out = g where x > 0 else 0
  void (*relu_grad)(const T* x, const T* g, T* out, std::size_t n);
  void (*leaky_relu)(T slope, const T* x, T* out, std::size_t n);
  void (*leaky_relu_grad)(T slope, const T* x, const T* g, T* out,
                          std::size_t n);
  // In-place Adam update over one parameter tensor.
  void (*adam_step)(T* param, const T* grad, T* m, T* v, std::size_t n,
                    const AdamArgs<T>& args);
  // Reductions accumulate in double regardless of T.
  double (*sum)(const T* x, std::size_t n);
  double (*dot)(const T* a, const T* b, std::size_t n);
};

template <typename T>
const KernelTable<T>& table(Backend b);

// Table for the active backend.
template <typename T>
const KernelTable<T>& active();

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
template <typename T>
const KernelTable<T>& table();
}
#endif

}  // namespace dietgraph::kernels
