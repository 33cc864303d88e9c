#include <atomic>
#include <cstdlib>
#include <string>

#include "advcloak/kernels.hpp"

namespace advcloak::kernels {
namespace {

Isa detect() {
  if (const char* env = std::getenv("ADVCLOAK_ISA")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return avx2_supported() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool avx2_supported() {
#if defined(ADVCLOAK_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !avx2_supported()) isa = Isa::kScalar;
  current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

#if defined(ADVCLOAK_HAVE_AVX2_KERNELS)
#define ADVCLOAK_DISPATCH(fn, ...)                                   \
  (active_isa() == Isa::kAvx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define ADVCLOAK_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

void gemm_accumulate(int m, int n, int k, const float* a, int lda,
                     const float* b, int ldb, float* c, int ldc) {
  ADVCLOAK_DISPATCH(gemm_accumulate, m, n, k, a, lda, b, ldb, c, ldc);
}

float dot(std::span<const float> a, std::span<const float> b) {
  return ADVCLOAK_DISPATCH(dot, a, b);
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  ADVCLOAK_DISPATCH(axpy, alpha, x, y);
}

void adam_update(std::span<float> w, std::span<const float> g,
                 std::span<float> m, std::span<float> v, const AdamCoeffs& c) {
  ADVCLOAK_DISPATCH(adam_update, w, g, m, v, c);
}

#undef ADVCLOAK_DISPATCH

}  // namespace advcloak::kernels
