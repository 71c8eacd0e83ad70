#include "hmmr/kernels/kernels.hpp"

namespace hmmr::kernels {
namespace {

void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn_ref(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void gemm_nt_ref(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

double dot_ref(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_ref(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_ref(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_ref(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void relu_ref(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_ref(std::size_t n, const double* x, const double* g, double* gx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += g[i];
  }
}

constexpr KernelTable kScalar{
    gemm_ref, gemm_tn_ref, gemm_nt_ref, dot_ref, axpy_ref, add_ref, mul_ref, relu_ref,
    relu_backward_ref,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace hmmr::kernels
