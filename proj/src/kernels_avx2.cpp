#include <immintrin.h>

#include "adactx/kernels.hpp"

namespace adactx::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Shared body of NN and TN: C row i accumulates a_scalar(i,p) * B row p.
// The column block of C stays in registers across the whole k loop.
template <bool TransA>
void gemm_rowbroadcast(std::size_t m, std::size_t n, std::size_t k, const double* a,
                       std::size_t lda, const double* b, std::size_t ldb, double* c,
                       std::size_t ldc, bool accumulate) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return TransA ? a[p * lda + i] : a[i * lda + p];
  };
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      __m256d c1 = accumulate ? _mm256_loadu_pd(crow + j + 4) : _mm256_setzero_pd();
      __m256d c2 = accumulate ? _mm256_loadu_pd(crow + j + 8) : _mm256_setzero_pd();
      __m256d c3 = accumulate ? _mm256_loadu_pd(crow + j + 12) : _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(a_at(i, p));
        const double* brow = b + p * ldb + j;
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
        c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
        c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + 4, c1);
      _mm256_storeu_pd(crow + j + 8, c2);
      _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p)
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(a_at(i, p)), _mm256_loadu_pd(b + p * ldb + j), c0);
      _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < n; ++j) {
      double s = accumulate ? crow[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a_at(i, p) * b[p * ldb + j];
      crow[j] = s;
    }
  }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  gemm_rowbroadcast<false>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  gemm_rowbroadcast<true>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; p < k; ++p) {
        r0 += arow[p] * b0[p];
        r1 += arow[p] * b1[p];
        r2 += arow[p] * b2[p];
        r3 += arow[p] * b3[p];
      }
      double* cij = c + i * ldc + j;
      if (accumulate) {
        cij[0] += r0;
        cij[1] += r1;
        cij[2] += r2;
        cij[3] += r3;
      } else {
        cij[0] = r0;
        cij[1] = r1;
        cij[2] = r2;
        cij[3] = r3;
      }
    }
    for (; j < n; ++j) {
      const double s = dot_avx2(arow, b + j * ldb, k);
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::Avx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2,
                                 gemm_tn_avx2};
  return &table;
}

}  // namespace adactx::kernels
