#include "dietgraph/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

// AVX2 variants. Each op performs the same per-element operations in the same
// order as the scalar reference (multiply then add, no FMA), so results are
// bit-identical for matmul / elementwise / adam. sum and dot use lane
// accumulators and are only tolerance-equivalent to the reference.

namespace dietgraph::kernels::avx2 {
namespace {

// ---- float ----

void matmul_f32(const float* a, const float* b, float* c, int m, int k,
                int n) {
  std::memset(c, 0, sizeof(float) * static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float aip = arow[p];
      if (aip == 0.0f) continue;
      const float* brow = b + static_cast<std::size_t>(p) * n;
      const __m256 va = _mm256_set1_ps(aip);
      int j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256 vc = _mm256_loadu_ps(crow + j);
        __m256 vb = _mm256_loadu_ps(brow + j);
        vc = _mm256_add_ps(vc, _mm256_mul_ps(va, vb));
        _mm256_storeu_ps(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                            _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_add_ps(vy, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f32(float alpha, const float* x, float* out, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void relu_f32(const float* x, float* out, std::size_t n) {
  const __m256 vz = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), vz));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_grad_f32(const float* x, const float* g, float* out, std::size_t n) {
  const __m256 vz = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), vz, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_and_ps(mask, _mm256_loadu_ps(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

void leaky_relu_f32(float slope, const float* x, float* out, std::size_t n) {
  const __m256 vz = _mm256_setzero_ps();
  const __m256 vs = _mm256_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 mask = _mm256_cmp_ps(vx, vz, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i,
                     _mm256_blendv_ps(_mm256_mul_ps(vs, vx), vx, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_grad_f32(float slope, const float* x, const float* g,
                         float* out, std::size_t n) {
  const __m256 vz = _mm256_setzero_ps();
  const __m256 vs = _mm256_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vg = _mm256_loadu_ps(g + i);
    const __m256 mask = _mm256_cmp_ps(vx, vz, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i,
                     _mm256_blendv_ps(_mm256_mul_ps(vs, vg), vg, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : slope * g[i];
}

void adam_step_f32(float* param, const float* grad, float* m, float* v,
                   std::size_t n, const AdamArgs<float>& args) {
  const __m256 vb1 = _mm256_set1_ps(args.beta1);
  const __m256 vb2 = _mm256_set1_ps(args.beta2);
  const __m256 vc1 = _mm256_set1_ps(1.0f - args.beta1);
  const __m256 vc2 = _mm256_set1_ps(1.0f - args.beta2);
  const __m256 vwd = _mm256_set1_ps(args.weight_decay);
  const __m256 vbc1 = _mm256_set1_ps(args.bias_corr1);
  const __m256 vbc2 = _mm256_set1_ps(args.bias_corr2);
  const __m256 vlr = _mm256_set1_ps(args.lr);
  const __m256 veps = _mm256_set1_ps(args.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vp = _mm256_loadu_ps(param + i);
    const __m256 vg = _mm256_add_ps(_mm256_loadu_ps(grad + i),
                                    _mm256_mul_ps(vwd, vp));
    __m256 vm = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    vm = _mm256_add_ps(_mm256_mul_ps(vb1, vm), _mm256_mul_ps(vc1, vg));
    vv = _mm256_add_ps(_mm256_mul_ps(vb2, vv),
                       _mm256_mul_ps(vc2, _mm256_mul_ps(vg, vg)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_div_ps(vm, vbc1);
    const __m256 vhat = _mm256_div_ps(vv, vbc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
    _mm256_storeu_ps(param + i, _mm256_sub_ps(vp, step));
  }
  for (; i < n; ++i) {
    const float g = grad[i] + args.weight_decay * param[i];
    m[i] = args.beta1 * m[i] + (1.0f - args.beta1) * g;
    v[i] = args.beta2 * v[i] + (1.0f - args.beta2) * (g * g);
    const float mhat = m[i] / args.bias_corr1;
    const float vhat = v[i] / args.bias_corr2;
    param[i] -= args.lr * mhat / (std::sqrt(vhat) + args.eps);
  }
}

double sum_f32(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(vx)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)));
  }
  const __m256d acc = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double total = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) total += static_cast<double>(x[i]);
  return total;
}

double dot_f32(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    const __m256d lo = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(vb)));
    const __m256d hi = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)));
    acc0 = _mm256_add_pd(acc0, lo);
    acc1 = _mm256_add_pd(acc1, hi);
  }
  const __m256d acc = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double total = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i)
    total += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return total;
}

// ---- double ----

void matmul_f64(const double* a, const double* b, double* c, int m, int k,
                int n) {
  std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      const __m256d va = _mm256_set1_pd(aip);
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d vc = _mm256_loadu_pd(crow + j);
        __m256d vb = _mm256_loadu_pd(brow + j);
        vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void add_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f64(double alpha, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void relu_f64(const double* x, double* out, std::size_t n) {
  const __m256d vz = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), vz));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_f64(const double* x, const double* g, double* out,
                   std::size_t n) {
  const __m256d vz = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), vz, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void leaky_relu_f64(double slope, const double* x, double* out,
                    std::size_t n) {
  const __m256d vz = _mm256_setzero_pd();
  const __m256d vs = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(vx, vz, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i,
                     _mm256_blendv_pd(_mm256_mul_pd(vs, vx), vx, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_grad_f64(double slope, const double* x, const double* g,
                         double* out, std::size_t n) {
  const __m256d vz = _mm256_setzero_pd();
  const __m256d vs = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vg = _mm256_loadu_pd(g + i);
    const __m256d mask = _mm256_cmp_pd(vx, vz, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i,
                     _mm256_blendv_pd(_mm256_mul_pd(vs, vg), vg, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : slope * g[i];
}

void adam_step_f64(double* param, const double* grad, double* m, double* v,
                   std::size_t n, const AdamArgs<double>& args) {
  const __m256d vb1 = _mm256_set1_pd(args.beta1);
  const __m256d vb2 = _mm256_set1_pd(args.beta2);
  const __m256d vc1 = _mm256_set1_pd(1.0 - args.beta1);
  const __m256d vc2 = _mm256_set1_pd(1.0 - args.beta2);
  const __m256d vwd = _mm256_set1_pd(args.weight_decay);
  const __m256d vbc1 = _mm256_set1_pd(args.bias_corr1);
  const __m256d vbc2 = _mm256_set1_pd(args.bias_corr2);
  const __m256d vlr = _mm256_set1_pd(args.lr);
  const __m256d veps = _mm256_set1_pd(args.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vp = _mm256_loadu_pd(param + i);
    const __m256d vg = _mm256_add_pd(_mm256_loadu_pd(grad + i),
                                     _mm256_mul_pd(vwd, vp));
    __m256d vm = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vm = _mm256_add_pd(_mm256_mul_pd(vb1, vm), _mm256_mul_pd(vc1, vg));
    vv = _mm256_add_pd(_mm256_mul_pd(vb2, vv),
                       _mm256_mul_pd(vc2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(vm, vbc1);
    const __m256d vhat = _mm256_div_pd(vv, vbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(vp, step));
  }
  for (; i < n; ++i) {
    const double g = grad[i] + args.weight_decay * param[i];
    m[i] = args.beta1 * m[i] + (1.0 - args.beta1) * g;
    v[i] = args.beta2 * v[i] + (1.0 - args.beta2) * (g * g);
    const double mhat = m[i] / args.bias_corr1;
    const double vhat = v[i] / args.bias_corr2;
    param[i] -= args.lr * mhat / (std::sqrt(vhat) + args.eps);
  }
}

double sum_f64(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double total = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) total += x[i];
  return total;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(
        acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double total = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

}  // namespace

template <typename T>
const KernelTable<T>& table();

template <>
const KernelTable<float>& table<float>() {
  static const KernelTable<float> t = [] {
    KernelTable<float> k;
    k.matmul = &matmul_f32;
    k.add = &add_f32;
    k.axpy = &axpy_f32;
    k.scale = &scale_f32;
    k.relu = &relu_f32;
    k.relu_grad = &relu_grad_f32;
    k.leaky_relu = &leaky_relu_f32;
    k.leaky_relu_grad = &leaky_relu_grad_f32;
    k.adam_step = &adam_step_f32;
    k.sum = &sum_f32;
    k.dot = &dot_f32;
    return k;
  }();
  return t;
}

template <>
const KernelTable<double>& table<double>() {
  static const KernelTable<double> t = [] {
    KernelTable<double> k;
    k.matmul = &matmul_f64;
    k.add = &add_f64;
    k.axpy = &axpy_f64;
    k.scale = &scale_f64;
    k.relu = &relu_f64;
    k.relu_grad = &relu_grad_f64;
    k.leaky_relu = &leaky_relu_f64;
    k.leaky_relu_grad = &leaky_relu_grad_f64;
    k.adam_step = &adam_step_f64;
    k.sum = &sum_f64;
    k.dot = &dot_f64;
    return k;
  }();
  return t;
}

}  // namespace dietgraph::kernels::avx2

#endif  // x86_64
