#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops used by the autodiff engine.
//
// Every kernel has a scalar reference implementation and, when the build
// enables it and the CPU reports AVX2+FMA, a vectorized variant. The active
// table is picked once at first use; HMMR_KERNELS=scalar in the environment
// (or set_backend) forces the reference path. All matrices are row-major.

namespace hmmr::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  // C[m,n] (+)= A[m,k] * B[k,n]
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c, bool accumulate);
  // C[m,n] (+)= A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // C[m,n] (+)= A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // out = max(x, 0)
  void (*relu)(std::size_t n, const double* x, double* out);
  // gx += (x > 0) ? g : 0
  void (*relu_backward)(std::size_t n, const double* x, const double* g, double* gx);
};

const KernelTable& scalar_table();
// Returns nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool avx2_supported();
Backend backend();
void set_backend(Backend b);
std::string_view backend_name(Backend b);

// Active table.
const KernelTable& table();

}  // namespace hmmr::kernels
