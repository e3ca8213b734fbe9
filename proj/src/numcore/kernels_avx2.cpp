// Compiled with -mavx2 -mfma; only entered after a runtime CPU check.

#include "cephlm/numcore/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define CEPHLM_HAVE_AVX2 1
#else
#define CEPHLM_HAVE_AVX2 0
#endif

#include <cstdint>

#include "cephlm/error.hpp"

namespace cephlm::numcore::avx2 {

#if CEPHLM_HAVE_AVX2

namespace {

inline __m256i tail_mask(std::size_t remaining) {
  alignas(32) static const std::int32_t table[16] = {-1, -1, -1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 0, 0, 0, 0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - remaining));
}

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

// R rows of C, full width, accumulating over all of k in registers.
template <int R>
void gemm_rows(std::size_t n, std::size_t k, StridedMatrix<float> a, std::size_t i0, const float* b,
               std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  const float* arow[R];
  for (int r = 0; r < R; ++r) arow[r] = a.data + (i0 + r) * a.row_stride;
  const std::size_t cs = a.col_stride;

  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256 acc0[R];
    __m256 acc1[R];
    for (int r = 0; r < R; ++r) {
      float* cp = c + (i0 + r) * ldc + j;
      acc0[r] = accumulate ? _mm256_loadu_ps(cp) : _mm256_setzero_ps();
      acc1[r] = accumulate ? _mm256_loadu_ps(cp + 8) : _mm256_setzero_ps();
    }
    for (std::size_t p = 0; p < k; ++p) {
      const float* bp = b + p * ldb + j;
      const __m256 b0 = _mm256_loadu_ps(bp);
      const __m256 b1 = _mm256_loadu_ps(bp + 8);
      for (int r = 0; r < R; ++r) {
        const __m256 av = _mm256_broadcast_ss(arow[r] + p * cs);
        acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
        acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
      }
    }
    for (int r = 0; r < R; ++r) {
      float* cp = c + (i0 + r) * ldc + j;
      _mm256_storeu_ps(cp, acc0[r]);
      _mm256_storeu_ps(cp + 8, acc1[r]);
    }
  }
  for (; j < n; j += 8) {
    const std::size_t width = n - j < 8 ? n - j : 8;
    const __m256i mask = tail_mask(width);
    __m256 acc[R];
    for (int r = 0; r < R; ++r) {
      float* cp = c + (i0 + r) * ldc + j;
      acc[r] = accumulate ? _mm256_maskload_ps(cp, mask) : _mm256_setzero_ps();
    }
    for (std::size_t p = 0; p < k; ++p) {
      const __m256 bv = _mm256_maskload_ps(b + p * ldb + j, mask);
      for (int r = 0; r < R; ++r) {
        acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(arow[r] + p * cs), bv, acc[r]);
      }
    }
    for (int r = 0; r < R; ++r) _mm256_maskstore_ps(c + (i0 + r) * ldc + j, mask, acc[r]);
  }
}

inline __m256 load_k(const float* p, std::size_t width) {
  return width == 8 ? _mm256_loadu_ps(p) : _mm256_maskload_ps(p, tail_mask(width));
}

}  // namespace

bool compiled() { return true; }

void gemm(std::size_t m, std::size_t n, std::size_t k, StridedMatrix<float> a, const float* b, std::size_t ldb,
          float* c, std::size_t ldc, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) gemm_rows<4>(n, k, a, i, b, ldb, c, ldc, accumulate);
  switch (m - i) {
    case 3: gemm_rows<3>(n, k, a, i, b, ldb, c, ldc, accumulate); break;
    case 2: gemm_rows<2>(n, k, a, i, b, ldb, c, ldc, accumulate); break;
    case 1: gemm_rows<1>(n, k, a, i, b, ldb, c, ldc, accumulate); break;
    default: break;
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * lda;
    float* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + j * ldb;
      const float* b1 = b0 + ldb;
      const float* b2 = b1 + ldb;
      const float* b3 = b2 + ldb;
      __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; p += 8) {
        const std::size_t w = k - p < 8 ? k - p : 8;
        const __m256 av = load_k(arow + p, w);
        s0 = _mm256_fmadd_ps(av, load_k(b0 + p, w), s0);
        s1 = _mm256_fmadd_ps(av, load_k(b1 + p, w), s1);
        s2 = _mm256_fmadd_ps(av, load_k(b2 + p, w), s2);
        s3 = _mm256_fmadd_ps(av, load_k(b3 + p, w), s3);
      }
      const float r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      if (accumulate) {
        crow[j] += r0;
        crow[j + 1] += r1;
        crow[j + 2] += r2;
        crow[j + 3] += r3;
      } else {
        crow[j] = r0;
        crow[j + 1] = r1;
        crow[j + 2] = r2;
        crow[j + 3] = r3;
      }
    }
    for (; j < n; ++j) {
      const float* bj = b + j * ldb;
      __m256 s = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; p += 8) {
        const std::size_t w = k - p < 8 ? k - p : 8;
        s = _mm256_fmadd_ps(load_k(arow + p, w), load_k(bj + p, w), s);
      }
      crow[j] = accumulate ? crow[j] + hsum(s) : hsum(s);
    }
  }
}

#else

bool compiled() { return false; }

void gemm(std::size_t, std::size_t, std::size_t, StridedMatrix<float>, const float*, std::size_t, float*, std::size_t,
          bool) {
  throw Error(Errc::invalid_argument, "AVX2 kernels were not compiled into this build");
}

void gemm_nt(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*, std::size_t, float*,
             std::size_t, bool) {
  throw Error(Errc::invalid_argument, "AVX2 kernels were not compiled into this build");
}

#endif

}  // namespace cephlm::numcore::avx2
