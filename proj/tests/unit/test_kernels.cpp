// Scalar reference vs. AVX2 kernels, both checked against a naive oracle.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "cephlm/numcore/kernels.hpp"
#include "cephlm/rng.hpp"

using namespace cephlm::numcore;

namespace {

std::vector<float> random_vec(std::size_t n, cephlm::Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// Independent oracle in double precision.
std::vector<double> naive_product(std::size_t m, std::size_t n, std::size_t k, const std::vector<float>& a,
                                  std::size_t a_rs, std::size_t a_cs, const std::vector<float>& b, bool b_transposed) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = b_transposed ? b[j * k + p] : b[p * n + j];
        s += static_cast<double>(a[i * a_rs + p * a_cs]) * bv;
      }
      c[i * n + j] = s;
    }
  }
  return c;
}

double max_abs_diff(const std::vector<float>& x, const std::vector<double>& y) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  return worst;
}

struct Dims {
  std::size_t m, n, k;
};

const Dims kDims[] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 9}, {5, 17, 8}, {7, 33, 19}, {16, 64, 72}, {2, 9, 200}};

}  // namespace

TEST_CASE("gemm: scalar and simd variants match a naive product, plain and transposed A") {
  cephlm::Rng rng(11);
  for (const auto& d : kDims) {
    for (bool transpose_a : {false, true}) {
      const auto a = random_vec(d.m * d.k, rng);
      const auto b = random_vec(d.k * d.n, rng);
      const std::size_t rs = transpose_a ? 1 : d.k;
      const std::size_t cs = transpose_a ? d.m : 1;
      const auto expected = naive_product(d.m, d.n, d.k, a, rs, cs, b, false);

      std::vector<float> c_scalar(d.m * d.n, 0.f);
      scalar::gemm<float>(d.m, d.n, d.k, {a.data(), rs, cs}, b.data(), d.n, c_scalar.data(), d.n, false);
      CHECK(max_abs_diff(c_scalar, expected) < 1e-4);

      if (detect_simd_level() == SimdLevel::avx2) {
        std::vector<float> c_simd(d.m * d.n, 0.f);
        avx2::gemm(d.m, d.n, d.k, {a.data(), rs, cs}, b.data(), d.n, c_simd.data(), d.n, false);
        CHECK(max_abs_diff(c_simd, expected) < 1e-4);
      }
    }
  }
}

TEST_CASE("gemm_nt: scalar and simd variants match a naive product") {
  cephlm::Rng rng(12);
  for (const auto& d : kDims) {
    const auto a = random_vec(d.m * d.k, rng);
    const auto b = random_vec(d.n * d.k, rng);
    const auto expected = naive_product(d.m, d.n, d.k, a, d.k, 1, b, true);

    std::vector<float> c_scalar(d.m * d.n);
    scalar::gemm_nt<float>(d.m, d.n, d.k, a.data(), d.k, b.data(), d.k, c_scalar.data(), d.n, false);
    CHECK(max_abs_diff(c_scalar, expected) < 1e-4);

    if (detect_simd_level() == SimdLevel::avx2) {
      std::vector<float> c_simd(d.m * d.n);
      avx2::gemm_nt(d.m, d.n, d.k, a.data(), d.k, b.data(), d.k, c_simd.data(), d.n, false);
      CHECK(max_abs_diff(c_simd, expected) < 1e-4);
    }
  }
}

TEST_CASE("gemm accumulate mode adds onto existing C in both variants") {
  cephlm::Rng rng(13);
  const Dims d{6, 21, 11};
  const auto a = random_vec(d.m * d.k, rng);
  const auto b = random_vec(d.k * d.n, rng);
  const auto base = random_vec(d.m * d.n, rng);
  auto expected = naive_product(d.m, d.n, d.k, a, d.k, 1, b, false);
  for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += base[i];

  for (SimdLevel level : {SimdLevel::scalar, SimdLevel::avx2}) {
    set_simd_level(level);
    std::vector<float> c = base;
    gemm<float>(d.m, d.n, d.k, {a.data(), d.k, 1}, b.data(), d.n, c.data(), d.n, true);
    CHECK(max_abs_diff(c, expected) < 1e-4);

    std::vector<float> bt(d.n * d.k);
    for (std::size_t p = 0; p < d.k; ++p)
      for (std::size_t j = 0; j < d.n; ++j) bt[j * d.k + p] = b[p * d.n + j];
    std::vector<float> c2 = base;
    gemm_nt<float>(d.m, d.n, d.k, a.data(), d.k, bt.data(), d.k, c2.data(), d.n, true);
    CHECK(max_abs_diff(c2, expected) < 1e-4);
  }
  set_simd_level(detect_simd_level());
}

TEST_CASE("dispatch honours the requested level and clamps to the CPU") {
  set_simd_level(SimdLevel::scalar);
  CHECK(active_simd_level() == SimdLevel::scalar);
  set_simd_level(SimdLevel::avx2);
  CHECK(active_simd_level() == detect_simd_level());
  set_simd_level(detect_simd_level());
}

TEST_CASE("double dispatch is the scalar path bit for bit") {
  cephlm::Rng rng(14);
  const Dims d{5, 19, 13};
  std::vector<double> a(d.m * d.k), b(d.k * d.n);
  for (auto& x : a) x = rng.uniform(-1, 1);
  for (auto& x : b) x = rng.uniform(-1, 1);
  std::vector<double> c1(d.m * d.n), c2(d.m * d.n);
  gemm<double>(d.m, d.n, d.k, {a.data(), d.k, 1}, b.data(), d.n, c1.data(), d.n, false);
  scalar::gemm<double>(d.m, d.n, d.k, {a.data(), d.k, 1}, b.data(), d.n, c2.data(), d.n, false);
  CHECK(c1 == c2);
}
