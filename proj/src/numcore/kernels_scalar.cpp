#include "cephlm/numcore/kernels.hpp"

namespace cephlm::numcore::scalar {

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, StridedMatrix<T> a, const T* b, std::size_t ldb, T* c,
          std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a.data[i * a.row_stride + p * a.col_stride];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * ldb;
      T sum = T(0);
      for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + sum : sum;
    }
  }
}

template void gemm<float>(std::size_t, std::size_t, std::size_t, StridedMatrix<float>, const float*, std::size_t,
                          float*, std::size_t, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t, StridedMatrix<double>, const double*, std::size_t,
                           double*, std::size_t, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*,
                             std::size_t, float*, std::size_t, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*,
                              std::size_t, double*, std::size_t, bool);

}  // namespace cephlm::numcore::scalar
