#include <cmath>

#include "advcloak/kernels.hpp"

namespace advcloak::kernels::scalar {

void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* c_row = c + static_cast<std::ptrdiff_t>(i) * ldc;
    const float* a_row = a + static_cast<std::ptrdiff_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const float av = a_row[p];
      if (av == 0.0f) continue;
      const float* b_row = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
  }
}

float dot(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void adam_update(std::span<float> w, std::span<const float> g,
                 std::span<float> m, std::span<float> v, const AdamCoeffs& c) {
  const float one_m_b1 = 1.0f - c.beta1;
  const float one_m_b2 = 1.0f - c.beta2;
  const float inv_bc1 = 1.0f / c.bias_correction1;
  const float inv_bc2 = 1.0f / c.bias_correction2;
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = c.beta1 * m[i] + one_m_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_m_b2 * g[i] * g[i];
    const float m_hat = m[i] * inv_bc1;
    const float v_hat = v[i] * inv_bc2;
    w[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace advcloak::kernels::scalar
