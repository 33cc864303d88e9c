#pragma once
// Dense float kernels used by the network layers.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2/FMA variant. The variant is chosen once at runtime from the CPU's
// capabilities; ADVCLOAK_ISA=scalar in the environment forces the reference
// path. Both paths are deterministic for a fixed choice of ISA, but they do
// not round identically (FMA and lane-wise reductions), so cross-ISA results
// agree only to float tolerance.

#include <cstddef>
#include <span>
#include <string_view>

namespace advcloak::kernels {

enum class Isa { kScalar, kAvx2 };

struct AdamCoeffs {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-7f;
  // 1 - beta^t, precomputed by the optimizer for the current step.
  float bias_correction1 = 1.0f;
  float bias_correction2 = 1.0f;
};

bool avx2_supported();
Isa active_isa();
// Overrides the runtime choice. Requesting kAvx2 on a CPU without it is
// ignored and the scalar path stays active.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

// C[m x n] += A[m x k] * B[k x n]; all row-major with explicit leading dims.
void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc);
float dot(std::span<const float> a, std::span<const float> b);
// y += alpha * x
void axpy(float alpha, std::span<const float> x, std::span<float> y);
void adam_update(std::span<float> w, std::span<const float> g,
                 std::span<float> m, std::span<float> v, const AdamCoeffs& c);

namespace scalar {
void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc);
float dot(std::span<const float> a, std::span<const float> b);
void axpy(float alpha, std::span<const float> x, std::span<float> y);
void adam_update(std::span<float> w, std::span<const float> g,
                 std::span<float> m, std::span<float> v, const AdamCoeffs& c);
}  // namespace scalar

#if defined(ADVCLOAK_HAVE_AVX2_KERNELS)
namespace avx2 {
void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc);
float dot(std::span<const float> a, std::span<const float> b);
void axpy(float alpha, std::span<const float> x, std::span<float> y);
void adam_update(std::span<float> w, std::span<const float> g,
                 std::span<float> m, std::span<float> v, const AdamCoeffs& c);
}  // namespace avx2
#endif

}  // namespace advcloak::kernels
