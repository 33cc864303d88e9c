// Compiled with -mavx2 -mfma. Only reached through the runtime dispatcher
// after the CPU has been checked.
#include <immintrin.h>

#include <cmath>

#include "advcloak/kernels.hpp"

namespace advcloak::kernels::avx2 {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// One row of C against a panel of B, 4 rows of A at a time when possible.
void gemm_rows4(int n, int k, const float* a, int lda, const float* b, int ldb,
                float* c, int ldc) {
  const float* a0 = a;
  const float* a1 = a + lda;
  const float* a2 = a + 2 * static_cast<std::ptrdiff_t>(lda);
  const float* a3 = a + 3 * static_cast<std::ptrdiff_t>(lda);
  float* c0 = c;
  float* c1 = c + ldc;
  float* c2 = c + 2 * static_cast<std::ptrdiff_t>(ldc);
  float* c3 = c + 3 * static_cast<std::ptrdiff_t>(ldc);
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256 acc00 = _mm256_loadu_ps(c0 + j), acc01 = _mm256_loadu_ps(c0 + j + 8);
    __m256 acc10 = _mm256_loadu_ps(c1 + j), acc11 = _mm256_loadu_ps(c1 + j + 8);
    __m256 acc20 = _mm256_loadu_ps(c2 + j), acc21 = _mm256_loadu_ps(c2 + j + 8);
    __m256 acc30 = _mm256_loadu_ps(c3 + j), acc31 = _mm256_loadu_ps(c3 + j + 8);
    for (int p = 0; p < k; ++p) {
      const float* b_row = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
      const __m256 b0 = _mm256_loadu_ps(b_row);
      const __m256 b1 = _mm256_loadu_ps(b_row + 8);
      __m256 av = _mm256_broadcast_ss(a0 + p);
      acc00 = _mm256_fmadd_ps(av, b0, acc00);
      acc01 = _mm256_fmadd_ps(av, b1, acc01);
      av = _mm256_broadcast_ss(a1 + p);
      acc10 = _mm256_fmadd_ps(av, b0, acc10);
      acc11 = _mm256_fmadd_ps(av, b1, acc11);
      av = _mm256_broadcast_ss(a2 + p);
      acc20 = _mm256_fmadd_ps(av, b0, acc20);
      acc21 = _mm256_fmadd_ps(av, b1, acc21);
      av = _mm256_broadcast_ss(a3 + p);
      acc30 = _mm256_fmadd_ps(av, b0, acc30);
      acc31 = _mm256_fmadd_ps(av, b1, acc31);
    }
    _mm256_storeu_ps(c0 + j, acc00);
    _mm256_storeu_ps(c0 + j + 8, acc01);
    _mm256_storeu_ps(c1 + j, acc10);
    _mm256_storeu_ps(c1 + j + 8, acc11);
    _mm256_storeu_ps(c2 + j, acc20);
    _mm256_storeu_ps(c2 + j + 8, acc21);
    _mm256_storeu_ps(c3 + j, acc30);
    _mm256_storeu_ps(c3 + j + 8, acc31);
  }
  for (; j + 8 <= n; j += 8) {
    __m256 acc0 = _mm256_loadu_ps(c0 + j);
    __m256 acc1 = _mm256_loadu_ps(c1 + j);
    __m256 acc2 = _mm256_loadu_ps(c2 + j);
    __m256 acc3 = _mm256_loadu_ps(c3 + j);
    for (int p = 0; p < k; ++p) {
      const __m256 bv = _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb + j);
      acc0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a0 + p), bv, acc0);
      acc1 = _mm256_fmadd_ps(_mm256_broadcast_ss(a1 + p), bv, acc1);
      acc2 = _mm256_fmadd_ps(_mm256_broadcast_ss(a2 + p), bv, acc2);
      acc3 = _mm256_fmadd_ps(_mm256_broadcast_ss(a3 + p), bv, acc3);
    }
    _mm256_storeu_ps(c0 + j, acc0);
    _mm256_storeu_ps(c1 + j, acc1);
    _mm256_storeu_ps(c2 + j, acc2);
    _mm256_storeu_ps(c3 + j, acc3);
  }
  for (; j < n; ++j) {
    float s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
    for (int p = 0; p < k; ++p) {
      const float bv = b[static_cast<std::ptrdiff_t>(p) * ldb + j];
      s0 = std::fma(a0[p], bv, s0);
      s1 = std::fma(a1[p], bv, s1);
      s2 = std::fma(a2[p], bv, s2);
      s3 = std::fma(a3[p], bv, s3);
    }
    c0[j] = s0;
    c1[j] = s1;
    c2[j] = s2;
    c3[j] = s3;
  }
}

void gemm_row1(int n, int k, const float* a, const float* b, int ldb, float* c) {
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256 acc = _mm256_loadu_ps(c + j);
    for (int p = 0; p < k; ++p) {
      acc = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p),
                            _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb + j), acc);
    }
    _mm256_storeu_ps(c + j, acc);
  }
  for (; j < n; ++j) {
    float s = c[j];
    for (int p = 0; p < k; ++p) s = std::fma(a[p], b[static_cast<std::ptrdiff_t>(p) * ldb + j], s);
    c[j] = s;
  }
}

}  // namespace

void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    gemm_rows4(n, k, a + static_cast<std::ptrdiff_t>(i) * lda, lda, b, ldb,
               c + static_cast<std::ptrdiff_t>(i) * ldc, ldc);
  }
  for (; i < m; ++i) {
    gemm_row1(n, k, a + static_cast<std::ptrdiff_t>(i) * lda, b, ldb,
              c + static_cast<std::ptrdiff_t>(i) * ldc);
  }
}

float dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i), _mm256_loadu_ps(b.data() + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i + 8),
                           _mm256_loadu_ps(b.data() + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i), _mm256_loadu_ps(b.data() + i), acc0);
  }
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  const std::size_t n = x.size();
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y.data() + i,
                     _mm256_fmadd_ps(av, _mm256_loadu_ps(x.data() + i), _mm256_loadu_ps(y.data() + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void adam_update(std::span<float> w, std::span<const float> g,
                 std::span<float> m, std::span<float> v, const AdamCoeffs& c) {
  const std::size_t n = w.size();
  const __m256 b1 = _mm256_set1_ps(c.beta1);
  const __m256 b2 = _mm256_set1_ps(c.beta2);
  const __m256 omb1 = _mm256_set1_ps(1.0f - c.beta1);
  const __m256 omb2 = _mm256_set1_ps(1.0f - c.beta2);
  const __m256 inv_bc1 = _mm256_set1_ps(1.0f / c.bias_correction1);
  const __m256 inv_bc2 = _mm256_set1_ps(1.0f / c.bias_correction2);
  const __m256 lr = _mm256_set1_ps(c.lr);
  const __m256 eps = _mm256_set1_ps(c.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g.data() + i);
    __m256 mv = _mm256_loadu_ps(m.data() + i);
    __m256 vv = _mm256_loadu_ps(v.data() + i);
    mv = _mm256_fmadd_ps(b1, mv, _mm256_mul_ps(omb1, gv));
    vv = _mm256_fmadd_ps(b2, vv, _mm256_mul_ps(omb2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m.data() + i, mv);
    _mm256_storeu_ps(v.data() + i, vv);
    const __m256 m_hat = _mm256_mul_ps(mv, inv_bc1);
    const __m256 v_hat = _mm256_mul_ps(vv, inv_bc2);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, m_hat),
                                      _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps));
    _mm256_storeu_ps(w.data() + i, _mm256_sub_ps(_mm256_loadu_ps(w.data() + i), step));
  }
  if (i < n) {
    scalar::adam_update(w.subspan(i), g.subspan(i), m.subspan(i), v.subspan(i), c);
  }
}

}  // namespace advcloak::kernels::avx2
