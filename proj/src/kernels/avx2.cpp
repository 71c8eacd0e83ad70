// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <vector>

#include "hmmr/kernels/kernels.hpp"

namespace hmmr::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Shared micro-kernel. Element A(i, p) lives at a[i * a_row + p * a_col], so
// the same loop serves A and A^T.
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t a_row, std::size_t a_col, const double* b, double* c,
                  bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n + j;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        const double* ap = a + i * a_row + p * a_col;
        __m256d av = _mm256_broadcast_sd(ap);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(ap + a_row);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(ap + 2 * a_row);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(ap + 3 * a_row);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      double* cr = c + i * n + j;
      const __m256d acc[8] = {c00, c01, c10, c11, c20, c21, c30, c31};
      for (int r = 0; r < 4; ++r) {
        double* row = cr + r * n;
        __m256d v0 = acc[2 * r], v1 = acc[2 * r + 1];
        if (accumulate) {
          v0 = _mm256_add_pd(v0, _mm256_loadu_pd(row));
          v1 = _mm256_add_pd(v1, _mm256_loadu_pd(row + 4));
        }
        _mm256_storeu_pd(row, v0);
        _mm256_storeu_pd(row + 4, v1);
      }
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[(i + r) * a_row + p * a_col] * b[p * n + j];
        double& dst = c[(i + r) * n + j];
        dst = accumulate ? dst + s : s;
      }
    }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + i * a_row + p * a_col),
                              _mm256_loadu_pd(b + p * n + j), acc);
      }
      double* row = c + i * n + j;
      if (accumulate) acc = _mm256_add_pd(acc, _mm256_loadu_pd(row));
      _mm256_storeu_pd(row, acc);
    }
    for (; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * a_row + p * a_col] * b[p * n + j];
      double& dst = c[i * n + j];
      dst = accumulate ? dst + s : s;
    }
  }
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c, bool accumulate) {
  gemm_strided(m, n, k, a, k, 1, b, c, accumulate);
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate) {
  gemm_strided(m, n, k, a, 1, m, b, c, accumulate);
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate) {
  // Transpose B[n,k] once, then reuse the row-broadcast kernel.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_strided(m, n, k, a, k, 1, bt.data(), c, accumulate);
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add_avx2(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_avx2(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void relu_avx2(std::size_t n, const double* x, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // keep strictly positive lanes so -0.0 and NaN map like the reference
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(v, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(std::size_t n, const double* x, const double* g, double* gx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d gv = _mm256_and_pd(_mm256_loadu_pd(g + i), mask);
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), gv));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += g[i];
  }
}

constexpr KernelTable kAvx2{
    gemm_avx2, gemm_tn_avx2, gemm_nt_avx2, dot_avx2,          axpy_avx2,
    add_avx2,  mul_avx2,     relu_avx2,    relu_backward_avx2,
};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace hmmr::kernels
