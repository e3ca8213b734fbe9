#pragma once

// Dense matrix-product kernels behind conv2d and dense.
//
// Every kernel has a portable scalar reference in `scalar::`; `avx2::` holds
// the AVX2+FMA float variants. The unqualified entry points dispatch at
// runtime on the detected CPU (override with CEPHLM_SIMD=scalar|avx2 or
// set_simd_level). double always takes the scalar path.

#include <cstddef>
#include <string_view>

namespace cephlm::numcore {

enum class SimdLevel { scalar, avx2 };

SimdLevel detect_simd_level();
SimdLevel active_simd_level();
void set_simd_level(SimdLevel level);  // clamps to what the CPU supports
std::string_view simd_level_name(SimdLevel level);

// Strided left operand: element (i, k) lives at a[i * row_stride + k * col_stride].
// Lets one kernel serve both A and A^T.
template <typename T>
struct StridedMatrix {
  const T* data;
  std::size_t row_stride;
  std::size_t col_stride;
};

// C[m x n] (+)= A[m x k] * B[k x n];  B, C row-major with leading dims ldb, ldc.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, StridedMatrix<T> a, const T* b, std::size_t ldb, T* c,
          std::size_t ldc, bool accumulate);

// C[m x n] (+)= A[m x k] * B[n x k]^T;  all row-major.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc, bool accumulate);

namespace scalar {
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, StridedMatrix<T> a, const T* b, std::size_t ldb, T* c,
          std::size_t ldc, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc, bool accumulate);
}  // namespace scalar

namespace avx2 {
bool compiled();
void gemm(std::size_t m, std::size_t n, std::size_t k, StridedMatrix<float> a, const float* b, std::size_t ldb,
          float* c, std::size_t ldc, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc, bool accumulate);
}  // namespace avx2

}  // namespace cephlm::numcore
