#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dietgraph/kernels.hpp"

namespace dietgraph::kernels {
namespace {

Backend detect_backend() {
  if (const char* env = std::getenv("DIETGRAPH_KERNELS")) {
    const std::string name(env);
    if (name == "scalar") return Backend::scalar;
    if (name == "avx2") {
      if (!cpu_supports_avx2())
        throw std::runtime_error("DIETGRAPH_KERNELS=avx2 but CPU lacks AVX2");
      return Backend::avx2;
    }
    if (!name.empty() && name != "auto")
      throw std::runtime_error("DIETGRAPH_KERNELS must be scalar, avx2 or auto, got \"" +
                               name + "\"");
  }
  return cpu_supports_avx2() ? Backend::avx2 : Backend::scalar;
}

Backend& current() {
  static Backend b = detect_backend();
  return b;
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

Backend active_backend() { return current(); }

void force_backend(Backend b) {
  if (b == Backend::avx2 && !cpu_supports_avx2())
    throw std::runtime_error("CPU lacks AVX2");
  current() = b;
}

void force_backend(const std::string& name) {
  if (name == "scalar") {
    force_backend(Backend::scalar);
  } else if (name == "avx2") {
    force_backend(Backend::avx2);
  } else if (name == "auto") {
    current() = cpu_supports_avx2() ? Backend::avx2 : Backend::scalar;
  } else {
    throw std::runtime_error("unknown kernel backend \"" + name + "\"");
  }
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "?";
}

template <typename T>
const KernelTable<T>& table(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
  if (b == Backend::avx2) return avx2::table<T>();
#else
  (void)b;
#endif
  return scalar::table<T>();
}

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_backend());
}

template const KernelTable<float>& table<float>(Backend);
template const KernelTable<double>& table<double>(Backend);
template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace dietgraph::kernels
