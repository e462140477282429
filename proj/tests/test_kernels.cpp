#include <cmath>
#include <cstring>
#include <vector>

#include "dietgraph/kernels.hpp"
#include "dietgraph/rng.hpp"
#include "doctest.h"

using dietgraph::RngStream;
using namespace dietgraph::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(RngStream& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) {
    const double u = rng.uniform();
    if (u < 0.05) {
      x = T(0);
    } else if (u < 0.1) {
      x = T(-0.0);
    } else {
      x = static_cast<T>(rng.uniform(-1.0, 1.0));
    }
  }
  return v;
}

template <typename T>
std::size_t bit_mismatches(const std::vector<T>& a, const std::vector<T>& b) {
  REQUIRE(a.size() == b.size());
  std::size_t bad = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(T)) != 0) ++bad;
  }
  return bad;
}

const std::vector<std::size_t> kLengths = {1, 3, 7, 8, 9, 15, 16, 17, 33, 100, 1000};

}  // namespace

TEST_CASE("backend dispatch") {
  const Backend before = active_backend();
  force_backend(Backend::scalar);
  CHECK(active_backend() == Backend::scalar);
  CHECK(std::string(backend_name(Backend::scalar)) == "scalar");
  CHECK(std::string(backend_name(Backend::avx2)) == "avx2");
  CHECK_THROWS(force_backend("vector9000"));
  if (cpu_supports_avx2()) {
    force_backend("avx2");
    CHECK(active_backend() == Backend::avx2);
  }
  force_backend(before);
}

TEST_CASE_TEMPLATE("avx2 elementwise ops match scalar bitwise", T, float,
                   double) {
  if (!cpu_supports_avx2()) return;
  const auto& s = scalar::table<T>();
  const auto& a = table<T>(Backend::avx2);
  RngStream rng(99, "kernel-elementwise");
  for (std::size_t n : kLengths) {
    const auto x = random_vec<T>(rng, n);
    const auto y = random_vec<T>(rng, n);
    std::vector<T> o1(n), o2(n);

    s.add(x.data(), y.data(), o1.data(), n);
    a.add(x.data(), y.data(), o2.data(), n);
    CHECK(bit_mismatches(o1, o2) == 0);

    const T alpha = static_cast<T>(rng.uniform(-2.0, 2.0));
    auto y1 = y, y2 = y;
    s.axpy(alpha, x.data(), y1.data(), n);
    a.axpy(alpha, x.data(), y2.data(), n);
    CHECK(bit_mismatches(y1, y2) == 0);

    s.scale(alpha, x.data(), o1.data(), n);
    a.scale(alpha, x.data(), o2.data(), n);
    CHECK(bit_mismatches(o1, o2) == 0);

    s.relu(x.data(), o1.data(), n);
    a.relu(x.data(), o2.data(), n);
    CHECK(bit_mismatches(o1, o2) == 0);

    s.relu_grad(x.data(), y.data(), o1.data(), n);
    a.relu_grad(x.data(), y.data(), o2.data(), n);
    CHECK(bit_mismatches(o1, o2) == 0);

    const T slope = static_cast<T>(0.2);
    s.leaky_relu(slope, x.data(), o1.data(), n);
    a.leaky_relu(slope, x.data(), o2.data(), n);
    CHECK(bit_mismatches(o1, o2) == 0);

    s.leaky_relu_grad(slope, x.data(), y.data(), o1.data(), n);
    a.leaky_relu_grad(slope, x.data(), y.data(), o2.data(), n);
    CHECK(bit_mismatches(o1, o2) == 0);
  }
}

TEST_CASE_TEMPLATE("avx2 matmul matches scalar bitwise", T, float, double) {
  if (!cpu_supports_avx2()) return;
  const auto& s = scalar::table<T>();
  const auto& a = table<T>(Backend::avx2);
  RngStream rng(7, "kernel-matmul");
  const int dims[][3] = {{1, 1, 1},  {3, 5, 7},   {8, 8, 8},  {13, 17, 19},
                         {2, 9, 4},  {5, 1, 6},   {1, 32, 9}, {16, 3, 24},
                         {11, 8, 1}, {10, 10, 40}};
  for (const auto& d : dims) {
    const int m = d[0], k = d[1], n = d[2];
    const auto av = random_vec<T>(rng, static_cast<std::size_t>(m) * k);
    const auto bv = random_vec<T>(rng, static_cast<std::size_t>(k) * n);
    std::vector<T> c1(static_cast<std::size_t>(m) * n);
    std::vector<T> c2(c1.size());
    s.matmul(av.data(), bv.data(), c1.data(), m, k, n);
    a.matmul(av.data(), bv.data(), c2.data(), m, k, n);
    CHECK(bit_mismatches(c1, c2) == 0);
  }
}

TEST_CASE_TEMPLATE("avx2 adam matches scalar bitwise", T, float, double) {
  if (!cpu_supports_avx2()) return;
  const auto& s = scalar::table<T>();
  const auto& a = table<T>(Backend::avx2);
  RngStream rng(21, "kernel-adam");
  for (std::size_t n : kLengths) {
    auto p1 = random_vec<T>(rng, n);
    auto p2 = p1;
    auto m1 = random_vec<T>(rng, n);
    auto m2 = m1;
    std::vector<T> v1(n), v2(n);
    for (std::size_t i = 0; i < n; ++i) {
      v1[i] = std::abs(static_cast<T>(rng.uniform(0.0, 0.01)));
      v2[i] = v1[i];
    }
    const T beta1 = static_cast<T>(0.9), beta2 = static_cast<T>(0.999);
    for (int step = 1; step <= 5; ++step) {
      const auto g = random_vec<T>(rng, n);
      AdamArgs<T> args;
      args.lr = static_cast<T>(0.001);
      args.beta1 = beta1;
      args.beta2 = beta2;
      args.eps = static_cast<T>(1e-8);
      args.weight_decay = static_cast<T>(0.001);
      args.bias_corr1 = T(1) - static_cast<T>(std::pow(beta1, step));
      args.bias_corr2 = T(1) - static_cast<T>(std::pow(beta2, step));
      s.adam_step(p1.data(), g.data(), m1.data(), v1.data(), n, args);
      a.adam_step(p2.data(), g.data(), m2.data(), v2.data(), n, args);
      CHECK(bit_mismatches(p1, p2) == 0);
      CHECK(bit_mismatches(m1, m2) == 0);
      CHECK(bit_mismatches(v1, v2) == 0);
    }
  }
}

TEST_CASE_TEMPLATE("avx2 reductions match scalar within tolerance", T, float,
                   double) {
  if (!cpu_supports_avx2()) return;
  const auto& s = scalar::table<T>();
  const auto& a = table<T>(Backend::avx2);
  RngStream rng(5, "kernel-reduce");
  for (std::size_t n : kLengths) {
    const auto x = random_vec<T>(rng, n);
    const auto y = random_vec<T>(rng, n);
    const double s1 = s.sum(x.data(), n);
    const double s2 = a.sum(x.data(), n);
    CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
    const double d1 = s.dot(x.data(), y.data(), n);
    const double d2 = a.dot(x.data(), y.data(), n);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
  }
}

TEST_CASE("scalar reductions accumulate in double") {
  // 1 + 2^-20 repeated: a float accumulator would lose the tail bits once the
  // running total grows past 2^4.
  const std::size_t n = 4096;
  std::vector<float> x(n, 1.0f + std::ldexp(1.0f, -20));
  const double got = scalar::table<float>().sum(x.data(), n);
  const double want = n * (1.0 + std::ldexp(1.0, -20));
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("scalar matmul small case") {
  // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
  const double a[] = {1, 2, 3, 4};
  const double b[] = {5, 6, 7, 8};
  double c[4];
  scalar::table<double>().matmul(a, b, c, 2, 2, 2);
  CHECK(c[0] == 19.0);
  CHECK(c[1] == 22.0);
  CHECK(c[2] == 43.0);
  CHECK(c[3] == 50.0);
}
