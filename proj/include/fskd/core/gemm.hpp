#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace fskd {
namespace detail {

// Row-major f64 matrix kernels.
//
// gemm_nn and gemm_tn accumulate over k in ascending order with one fused
// multiply-add per element and step, so results are bit-identical to a plain
// triple loop that accumulates with std::fma. Backward-only gemm_nt uses
// partial sums and may reassociate.

#if defined(__AVX512F__)

// C tile [MR x 16] += A(:,k) * B(k,:), A indexed transposed when TA.
template <bool TA>
inline void kernel_4x16(std::size_t K, const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
                        std::size_t ldc) {
  __m512d c00 = _mm512_loadu_pd(C + 0 * ldc), c01 = _mm512_loadu_pd(C + 0 * ldc + 8);
  __m512d c10 = _mm512_loadu_pd(C + 1 * ldc), c11 = _mm512_loadu_pd(C + 1 * ldc + 8);
  __m512d c20 = _mm512_loadu_pd(C + 2 * ldc), c21 = _mm512_loadu_pd(C + 2 * ldc + 8);
  __m512d c30 = _mm512_loadu_pd(C + 3 * ldc), c31 = _mm512_loadu_pd(C + 3 * ldc + 8);
  for (std::size_t k = 0; k < K; ++k) {
    const __m512d b0 = _mm512_loadu_pd(B + k * ldb);
    const __m512d b1 = _mm512_loadu_pd(B + k * ldb + 8);
    const __m512d a0 = _mm512_set1_pd(TA ? A[k * lda + 0] : A[0 * lda + k]);
    const __m512d a1 = _mm512_set1_pd(TA ? A[k * lda + 1] : A[1 * lda + k]);
    const __m512d a2 = _mm512_set1_pd(TA ? A[k * lda + 2] : A[2 * lda + k]);
    const __m512d a3 = _mm512_set1_pd(TA ? A[k * lda + 3] : A[3 * lda + k]);
    c00 = _mm512_fmadd_pd(a0, b0, c00);
    c01 = _mm512_fmadd_pd(a0, b1, c01);
    c10 = _mm512_fmadd_pd(a1, b0, c10);
    c11 = _mm512_fmadd_pd(a1, b1, c11);
    c20 = _mm512_fmadd_pd(a2, b0, c20);
    c21 = _mm512_fmadd_pd(a2, b1, c21);
    c30 = _mm512_fmadd_pd(a3, b0, c30);
    c31 = _mm512_fmadd_pd(a3, b1, c31);
  }
  _mm512_storeu_pd(C + 0 * ldc, c00);
  _mm512_storeu_pd(C + 0 * ldc + 8, c01);
  _mm512_storeu_pd(C + 1 * ldc, c10);
  _mm512_storeu_pd(C + 1 * ldc + 8, c11);
  _mm512_storeu_pd(C + 2 * ldc, c20);
  _mm512_storeu_pd(C + 2 * ldc + 8, c21);
  _mm512_storeu_pd(C + 3 * ldc, c30);
  _mm512_storeu_pd(C + 3 * ldc + 8, c31);
}

// C row segment [1 x 16] update for M remainders.
template <bool TA>
inline void kernel_1x16(std::size_t K, const double* A, std::size_t lda, std::size_t i, const double* B,
                        std::size_t ldb, double* C) {
  __m512d c0 = _mm512_loadu_pd(C);
  __m512d c1 = _mm512_loadu_pd(C + 8);
  for (std::size_t k = 0; k < K; ++k) {
    const __m512d a = _mm512_set1_pd(TA ? A[k * lda + i] : A[i * lda + k]);
    c0 = _mm512_fmadd_pd(a, _mm512_loadu_pd(B + k * ldb), c0);
    c1 = _mm512_fmadd_pd(a, _mm512_loadu_pd(B + k * ldb + 8), c1);
  }
  _mm512_storeu_pd(C, c0);
  _mm512_storeu_pd(C + 8, c1);
}

#endif  // __AVX512F__

template <bool TA>
inline void gemm_ax_b(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda, const double* B,
                      std::size_t ldb, double* C, std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < M; ++i) std::memset(C + i * ldc, 0, N * sizeof(double));
  }
  std::size_t j_vec = 0;
#if defined(__AVX512F__)
  j_vec = N - N % 16;
  for (std::size_t j = 0; j < j_vec; j += 16) {
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) kernel_4x16<TA>(K, TA ? A + i : A + i * lda, lda, B + j, ldb, C + i * ldc + j, ldc);
    for (; i < M; ++i) kernel_1x16<TA>(K, A, lda, i, B + j, ldb, C + i * ldc + j);
  }
#endif
  // scalar tail (and full fallback without AVX-512)
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = j_vec; j < N; ++j) {
      double acc = C[i * ldc + j];
      for (std::size_t k = 0; k < K; ++k) acc = std::fma(TA ? A[k * lda + i] : A[i * lda + k], B[k * ldb + j], acc);
      C[i * ldc + j] = acc;
    }
}

// C[M x N] = A[M x K] * B[K x N] (+C when accumulate).
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda, const double* B,
                    std::size_t ldb, double* C, std::size_t ldc, bool accumulate = false) {
  gemm_ax_b<false>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

// C[M x N] = A^T * B, A is [K x M].
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda, const double* B,
                    std::size_t ldb, double* C, std::size_t ldc, bool accumulate = false) {
  gemm_ax_b<true>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

// C[M x N] = A[M x K] * B^T, B is [N x K]. Backward-pass kernel (register
// tile of vector partial sums; free to reassociate).
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda, const double* B,
                    std::size_t ldb, double* C, std::size_t ldc, bool accumulate = false) {
  std::size_t i = 0;
#if defined(__AVX512F__)
  for (; i + 2 <= M; i += 2) {
    const double* a0 = A + i * lda;
    const double* a1 = a0 + lda;
    std::size_t j = 0;
    for (; j + 4 <= N; j += 4) {
      const double* b0 = B + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m512d s00 = _mm512_setzero_pd(), s01 = _mm512_setzero_pd(), s02 = _mm512_setzero_pd(),
              s03 = _mm512_setzero_pd();
      __m512d s10 = _mm512_setzero_pd(), s11 = _mm512_setzero_pd(), s12 = _mm512_setzero_pd(),
              s13 = _mm512_setzero_pd();
      std::size_t k = 0;
      for (; k + 8 <= K; k += 8) {
        const __m512d va0 = _mm512_loadu_pd(a0 + k);
        const __m512d va1 = _mm512_loadu_pd(a1 + k);
        const __m512d vb0 = _mm512_loadu_pd(b0 + k);
        const __m512d vb1 = _mm512_loadu_pd(b1 + k);
        const __m512d vb2 = _mm512_loadu_pd(b2 + k);
        const __m512d vb3 = _mm512_loadu_pd(b3 + k);
        s00 = _mm512_fmadd_pd(va0, vb0, s00);
        s01 = _mm512_fmadd_pd(va0, vb1, s01);
        s02 = _mm512_fmadd_pd(va0, vb2, s02);
        s03 = _mm512_fmadd_pd(va0, vb3, s03);
        s10 = _mm512_fmadd_pd(va1, vb0, s10);
        s11 = _mm512_fmadd_pd(va1, vb1, s11);
        s12 = _mm512_fmadd_pd(va1, vb2, s12);
        s13 = _mm512_fmadd_pd(va1, vb3, s13);
      }
      double r[2][4] = {{_mm512_reduce_add_pd(s00), _mm512_reduce_add_pd(s01), _mm512_reduce_add_pd(s02),
                         _mm512_reduce_add_pd(s03)},
                        {_mm512_reduce_add_pd(s10), _mm512_reduce_add_pd(s11), _mm512_reduce_add_pd(s12),
                         _mm512_reduce_add_pd(s13)}};
      for (; k < K; ++k) {
        r[0][0] += a0[k] * b0[k];
        r[0][1] += a0[k] * b1[k];
        r[0][2] += a0[k] * b2[k];
        r[0][3] += a0[k] * b3[k];
        r[1][0] += a1[k] * b0[k];
        r[1][1] += a1[k] * b1[k];
        r[1][2] += a1[k] * b2[k];
        r[1][3] += a1[k] * b3[k];
      }
      for (std::size_t mi = 0; mi < 2; ++mi)
        for (std::size_t jj = 0; jj < 4; ++jj) {
          double* c = C + (i + mi) * ldc + j + jj;
          *c = (accumulate ? *c : 0.0) + r[mi][jj];
        }
    }
    for (; j < N; ++j) {
      const double* b = B + j * ldb;
      double r0 = 0.0, r1 = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        r0 += a0[k] * b[k];
        r1 += a1[k] * b[k];
      }
      C[i * ldc + j] = (accumulate ? C[i * ldc + j] : 0.0) + r0;
      C[(i + 1) * ldc + j] = (accumulate ? C[(i + 1) * ldc + j] : 0.0) + r1;
    }
  }
#endif
  for (; i < M; ++i) {
    const double* a = A + i * lda;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * ldb;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      if (accumulate)
        C[i * ldc + j] += s;
      else
        C[i * ldc + j] = s;
    }
  }
}

}  // namespace detail
}  // namespace fskd
