#include <atomic>
#include <cstdlib>
#include <cstring>

#include "hmmr/kernels/kernels.hpp"

namespace hmmr::kernels {

#ifndef HMMR_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

Backend initial_backend() {
  if (const char* env = std::getenv("HMMR_KERNELS"); env && std::strcmp(env, "scalar") == 0) {
    return Backend::Scalar;
  }
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

bool avx2_supported() {
#if defined(HMMR_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Backend backend() { return active().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported()) b = Backend::Scalar;
  active().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

const KernelTable& table() {
  return backend() == Backend::Avx2 ? *avx2_table() : scalar_table();
}

}  // namespace hmmr::kernels
