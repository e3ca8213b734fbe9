#include <atomic>
#include <cstdlib>
#include <string>

#include "cephlm/numcore/kernels.hpp"

namespace cephlm::numcore {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return avx2::compiled() && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

SimdLevel initial_level() {
  SimdLevel level = detect_simd_level();
  if (const char* env = std::getenv("CEPHLM_SIMD")) {
    if (std::string(env) == "scalar") level = SimdLevel::scalar;
  }
  return level;
}

std::atomic<SimdLevel>& level_slot() {
  static std::atomic<SimdLevel> level{initial_level()};
  return level;
}

}  // namespace

SimdLevel detect_simd_level() { return cpu_has_avx2() ? SimdLevel::avx2 : SimdLevel::scalar; }

SimdLevel active_simd_level() { return level_slot().load(std::memory_order_relaxed); }

void set_simd_level(SimdLevel level) {
  if (level == SimdLevel::avx2 && !cpu_has_avx2()) level = SimdLevel::scalar;
  level_slot().store(level, std::memory_order_relaxed);
}

std::string_view simd_level_name(SimdLevel level) {
  return level == SimdLevel::avx2 ? "avx2" : "scalar";
}

template <>
void gemm<float>(std::size_t m, std::size_t n, std::size_t k, StridedMatrix<float> a, const float* b,
                 std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  if (active_simd_level() == SimdLevel::avx2) {
    avx2::gemm(m, n, k, a, b, ldb, c, ldc, accumulate);
  } else {
    scalar::gemm(m, n, k, a, b, ldb, c, ldc, accumulate);
  }
}

template <>
void gemm<double>(std::size_t m, std::size_t n, std::size_t k, StridedMatrix<double> a, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  scalar::gemm(m, n, k, a, b, ldb, c, ldc, accumulate);
}

template <>
void gemm_nt<float>(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
                    std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  if (active_simd_level() == SimdLevel::avx2) {
    avx2::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    scalar::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

template <>
void gemm_nt<double>(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                     std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  scalar::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

}  // namespace cephlm::numcore
