#include <doctest.h>

#include <cmath>
#include <vector>

#include "cephlm/error.hpp"
#include "cephlm/numcore/adam.hpp"
#include "cephlm/numcore/gradcheck.hpp"
#include "cephlm/numcore/ops.hpp"
#include "test_support.hpp"

using namespace cephlm::numcore;
using cephlm::Errc;
using cephlm::Error;
using testsupport::random_tensor;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected cephlm::Error");
  return Errc::invalid_argument;
}

// Quadruple-loop convolution oracle with explicit zero padding.
std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int pad) {
  const int c_in = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1)), wd = static_cast<int>(x.dim(2));
  const int c_out = static_cast<int>(w.dim(0)), k = static_cast<int>(w.dim(2));
  const int oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
  std::vector<double> out(static_cast<std::size_t>(c_out * oh * ow));
  for (int co = 0; co < c_out; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = b.data()[co];
        for (int ci = 0; ci < c_in; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy + ky - pad, ix = ox + kx - pad;
              if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
              s += x.data()[(ci * h + iy) * wd + ix] * w.data()[((co * c_in + ci) * k + ky) * k + kx];
            }
        out[(co * oh + oy) * ow + ox] = s;
      }
  return out;
}

}  // namespace

TEST_SUITE("conv2d") {
  TEST_CASE("1x1 identity kernel reproduces the input") {
    cephlm::Rng rng(1);
    auto x = random_tensor<double>({1, 5, 7}, rng);
    Tensor<double> w({1, 1, 1, 1}, 1.0);
    Tensor<double> b({1}, 0.0);
    auto y = conv2d(x, w, b, Padding::same);
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
  }

  TEST_CASE("3x3 ones over 3x3 ones with valid padding sums to 9") {
    Tensor<float> x({1, 3, 3}, 1.f);
    Tensor<float> w({1, 1, 3, 3}, 1.f);
    Tensor<float> b({1}, 0.f);
    auto y = conv2d(x, w, b, Padding::valid);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.0));
  }

  TEST_CASE("random 8x8 input matches the naive-loop oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      cephlm::Rng rng(100 + seed);
      auto x = random_tensor<double>({2, 8, 8}, rng);
      auto w = random_tensor<double>({3, 2, 3, 3}, rng);
      auto b = random_tensor<double>({3}, rng);
      for (Padding pad : {Padding::same, Padding::valid}) {
        auto y = conv2d(x, w, b, pad);
        auto expected = naive_conv(x, w, b, pad == Padding::same ? 1 : 0);
        REQUIRE(y.numel() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(y.data()[i] - expected[i]) < 1e-6);
      }
      // float path, including the SIMD kernels, within single precision.
      Tensor<float> xf(x.shape()), wf(w.shape()), bf(b.shape());
      for (std::size_t i = 0; i < x.numel(); ++i) xf.data()[i] = static_cast<float>(x.data()[i]);
      for (std::size_t i = 0; i < w.numel(); ++i) wf.data()[i] = static_cast<float>(w.data()[i]);
      for (std::size_t i = 0; i < b.numel(); ++i) bf.data()[i] = static_cast<float>(b.data()[i]);
      auto yf = conv2d(xf, wf, bf, Padding::same);
      auto expected = naive_conv(x, w, b, 1);
      for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(yf.data()[i] - expected[i]) < 1e-5);
    }
  }

  TEST_CASE("batched input equals per-sample calls") {
    cephlm::Rng rng(3);
    auto x = random_tensor<float>({3, 2, 6, 6}, rng);
    auto w = random_tensor<float>({4, 2, 3, 3}, rng);
    auto b = random_tensor<float>({4}, rng);
    auto y = conv2d(x, w, b, Padding::same);
    CHECK(y.shape() == Shape{3, 4, 6, 6});
    for (std::size_t n = 0; n < 3; ++n) {
      Tensor<float> xn({2, 6, 6}, std::vector<float>(x.data().begin() + n * 72, x.data().begin() + (n + 1) * 72));
      auto yn = conv2d(xn, w, b, Padding::same);
      for (std::size_t i = 0; i < yn.numel(); ++i) CHECK(yn.data()[i] == y.data()[n * 144 + i]);
    }
  }

  TEST_CASE("channel mismatch and bad kernels are structured errors") {
    Tensor<float> x({2, 4, 4});
    Tensor<float> w({1, 3, 3, 3});
    Tensor<float> b({1});
    CHECK(code_of([&] { conv2d(x, w, b, Padding::same); }) == Errc::shape_mismatch);
    Tensor<float> even({1, 2, 2, 2});
    CHECK(code_of([&] { conv2d(x, even, b, Padding::same); }) == Errc::shape_mismatch);
    Tensor<float> small({2, 2, 2});
    Tensor<float> w2({1, 2, 3, 3});
    CHECK(code_of([&] { conv2d(small, w2, b, Padding::valid); }) == Errc::shape_mismatch);
  }

  TEST_CASE("gradient matches finite differences for input, kernels and bias") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cephlm::Rng rng(200 + seed);
      auto x = random_tensor<double>({2, 5, 5}, rng);
      auto w = random_tensor<double>({3, 2, 3, 3}, rng);
      auto b = random_tensor<double>({3}, rng);
      auto weights = random_tensor<double>({3, 5, 5}, rng);  // breaks symmetry of a plain sum
      const Padding pad = seed % 2 ? Padding::same : Padding::valid;
      auto with_weights = [&](const Tensor<double>& y) {
        if (y.shape() == weights.shape()) return sum(mul(y, weights));
        return sum(mul(y, y));
      };
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return with_weights(conv2d(v, w, b, pad)); }, x,
                                    1e-5) < 1e-4);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return with_weights(conv2d(x, v, b, pad)); }, w,
                                    1e-5) < 1e-4);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return with_weights(conv2d(x, w, v, pad)); }, b,
                                    1e-5) < 1e-4);
    }
  }
}

TEST_SUITE("maxpool2") {
  TEST_CASE("2x2 block takes its max") {
    Tensor<float> x({1, 2, 2}, {1, 2, 3, 4});
    CHECK(maxpool2(x).item() == 4.f);
  }

  TEST_CASE("constant input routes gradient to the first cell of each block") {
    Tensor<double> x({1, 4, 4}, 2.0);
    x.set_requires_grad(true);
    auto y = maxpool2(x);
    for (double v : y.data()) CHECK(v == 2.0);
    backward(sum(y));
    const std::vector<double> expected = {1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < 16; ++i) CHECK(x.grad()[i] == expected[i]);
  }

  TEST_CASE("random 16x16 matches naive block scan") {
    cephlm::Rng rng(5);
    auto x = random_tensor<float>({3, 16, 16}, rng);
    auto y = maxpool2(x);
    CHECK(y.shape() == Shape{3, 8, 8});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t oy = 0; oy < 8; ++oy)
        for (std::size_t ox = 0; ox < 8; ++ox) {
          float m = -1e30f;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, x.data()[(c * 16 + 2 * oy + dy) * 16 + 2 * ox + dx]);
          CHECK(y.data()[(c * 8 + oy) * 8 + ox] == m);
        }
  }

  TEST_CASE("odd spatial dimension is an error") {
    Tensor<float> x({1, 3, 4});
    CHECK(code_of([&] { maxpool2(x); }) == Errc::shape_mismatch);
  }

  TEST_CASE("gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cephlm::Rng rng(300 + seed);
      auto x = random_tensor<double>({2, 6, 6}, rng);
      auto weights = random_tensor<double>({2, 3, 3}, rng);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return sum(mul(maxpool2(v), weights)); }, x,
                                    1e-6) < 1e-4);
    }
  }
}

TEST_SUITE("relu") {
  TEST_CASE("values and zero subgradient") {
    Tensor<double> x({3}, {-1.0, 2.0, 0.0});
    x.set_requires_grad(true);
    auto y = relu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 2.0);
    CHECK(y.data()[2] == 0.0);
    backward(sum(y));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 0.0);
  }

  TEST_CASE("gradient matches finite differences away from the kink") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cephlm::Rng rng(400 + seed);
      auto x = random_tensor<double>({16}, rng);
      for (auto& v : x.data())
        if (std::abs(v) < 1e-3) v = 0.5;
      auto weights = random_tensor<double>({16}, rng);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return sum(mul(relu(v), weights)); }, x, 1e-6) <
            1e-4);
    }
  }
}

TEST_SUITE("dense") {
  TEST_CASE("identity weights reproduce the input") {
    Tensor<float> x({3}, {1.f, -2.f, 3.f});
    Tensor<float> w({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor<float> b({3}, 0.f);
    auto y = dense(x, w, b);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.data()[i] == x.data()[i]);
  }

  TEST_CASE("hand arithmetic") {
    Tensor<float> x({2}, {2.f, 3.f});
    Tensor<float> w({1, 2}, {1.f, 1.f});
    Tensor<float> b({1}, {1.f});
    CHECK(dense(x, w, b).item() == 6.f);
  }

  TEST_CASE("random 32->16 matches naive dot products") {
    cephlm::Rng rng(6);
    auto x = random_tensor<float>({4, 32}, rng);
    auto w = random_tensor<float>({16, 32}, rng);
    auto b = random_tensor<float>({16}, rng);
    auto y = dense(x, w, b);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 16; ++j) {
        double s = b.data()[j];
        for (std::size_t i = 0; i < 32; ++i) s += double(x.data()[r * 32 + i]) * w.data()[j * 32 + i];
        CHECK(std::abs(y.data()[r * 16 + j] - s) < 1e-5);
      }
  }

  TEST_CASE("dimension mismatch is an error") {
    Tensor<float> x({3});
    Tensor<float> w({2, 4});
    Tensor<float> b({2});
    CHECK(code_of([&] { dense(x, w, b); }) == Errc::shape_mismatch);
    Tensor<float> w2({2, 3});
    Tensor<float> b2({3});
    CHECK(code_of([&] { dense(x, w2, b2); }) == Errc::shape_mismatch);
  }

  TEST_CASE("gradient matches finite differences in all three arguments") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cephlm::Rng rng(500 + seed);
      auto x = random_tensor<double>({3, 7}, rng);
      auto w = random_tensor<double>({5, 7}, rng);
      auto b = random_tensor<double>({5}, rng);
      auto sq = [](const Tensor<double>& y) { return sum(mul(y, y)); };
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return sq(dense(v, w, b)); }, x, 1e-5) < 1e-4);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return sq(dense(x, v, b)); }, w, 1e-5) < 1e-4);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return sq(dense(x, w, v)); }, b, 1e-5) < 1e-4);
    }
  }
}

TEST_SUITE("softmax_cross_entropy") {
  TEST_CASE("uniform logits give ln C") {
    Tensor<double> z({4}, 0.0);
    auto r = softmax_cross_entropy(z, 2);
    CHECK(r.loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(r.loss.item() == doctest::Approx(1.3863).epsilon(1e-4));
  }

  TEST_CASE("saturated logits give near-zero loss without overflow") {
    Tensor<double> z({3}, {100.0, 0.0, 0.0});
    auto r = softmax_cross_entropy(z, 0);
    CHECK(r.loss.item() < 1e-40);
    CHECK(std::isfinite(r.loss.item()));
  }

  TEST_CASE("label out of range") {
    Tensor<double> z({3});
    CHECK(code_of([&] { softmax_cross_entropy(z, 3); }) == Errc::label_out_of_range);
  }

  TEST_CASE("probabilities form a distribution for random logits") {
    cephlm::Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      auto z = random_tensor<float>({7}, rng, -30.0, 30.0);
      auto r = softmax_cross_entropy(z, 0);
      double s = 0.0;
      for (float p : r.probs.data()) {
        CHECK(p >= 0.f);
        CHECK(p <= 1.f);
        s += p;
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }

  TEST_CASE("gradient matches finite differences, single and batched") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cephlm::Rng rng(600 + seed);
      auto z = random_tensor<double>({5}, rng, -3.0, 3.0);
      const std::size_t label = rng.index(5);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return softmax_cross_entropy(v, label).loss; }, z,
                                    1e-5) < 1e-4);
      auto zb = random_tensor<double>({3, 4}, rng, -3.0, 3.0);
      const std::vector<std::size_t> labels = {rng.index(4), rng.index(4), rng.index(4)};
      CHECK(finite_difference_check(
                [&](const Tensor<double>& v) { return softmax_cross_entropy(v, std::span(labels)).loss; }, zb,
                1e-5) < 1e-4);
    }
  }
}

TEST_SUITE("mse_loss") {
  TEST_CASE("hand values") {
    Tensor<double> a({2}, {0.3, 0.7});
    CHECK(mse_loss(a, a.clone()).item() == 0.0);
    Tensor<double> p({2}, {1.0, 0.0});
    Tensor<double> t({2}, {0.0, 0.0});
    CHECK(mse_loss(p, t).item() == doctest::Approx(0.5));
  }

  TEST_CASE("shape mismatch") {
    Tensor<double> p({2});
    Tensor<double> t({3});
    CHECK(code_of([&] { mse_loss(p, t); }) == Errc::shape_mismatch);
  }

  TEST_CASE("gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cephlm::Rng rng(700 + seed);
      auto p = random_tensor<double>({2}, rng);
      auto t = random_tensor<double>({2}, rng);
      CHECK(finite_difference_check([&](const Tensor<double>& v) { return mse_loss(v, t); }, p, 1e-5) < 1e-4);
    }
  }
}

TEST_SUITE("backward") {
  TEST_CASE("sum of relu over positive inputs has unit gradient") {
    Tensor<double> x({4}, {0.5, 1.0, 2.0, 3.0});
    x.set_requires_grad(true);
    backward(sum(relu(x)));
    for (double g : x.grad()) CHECK(g == 1.0);
  }

  TEST_CASE("d(x*x)/dx at 3 is 6") {
    Tensor<double> x = Tensor<double>::scalar(3.0);
    x.set_requires_grad(true);
    backward(mul(x, x));
    CHECK(x.grad()[0] == 6.0);
  }

  TEST_CASE("repeated calls accumulate until zeroed") {
    Tensor<double> x = Tensor<double>::scalar(3.0);
    x.set_requires_grad(true);
    auto y = mul(x, x);
    backward(y);
    backward(y);
    CHECK(x.grad()[0] == 12.0);
    x.zero_grad();
    backward(y);
    CHECK(x.grad()[0] == 6.0);
  }

  TEST_CASE("non-scalar loss is rejected") {
    Tensor<double> x({2}, 1.0);
    x.set_requires_grad(true);
    CHECK(code_of([&] { backward(relu(x)); }) == Errc::not_scalar);
  }

  TEST_CASE("no graph is recorded under NoGradGuard") {
    Tensor<double> x({2}, 1.0);
    x.set_requires_grad(true);
    NoGradGuard guard;
    auto y = sum(x);
    CHECK_FALSE(y.requires_grad());
  }

  TEST_CASE("ops are bit-identical across repeated runs") {
    cephlm::Rng rng(8);
    auto x = random_tensor<float>({2, 3, 16, 16}, rng);
    auto w = random_tensor<float>({5, 3, 3, 3}, rng);
    auto b = random_tensor<float>({5}, rng);
    auto dw = random_tensor<float>({4, 5 * 8 * 8}, rng);
    auto db = random_tensor<float>({4}, rng);
    auto run = [&] { return dense(flatten(maxpool2(relu(conv2d(x, w, b, Padding::same))), true), dw, db); };
    auto a = run();
    auto c = run();
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == c.data()[i]);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("zero gradient leaves parameters unchanged but advances t") {
    Tensor<double> p({3}, {1.0, -2.0, 0.5});
    p.set_requires_grad(true);
    std::vector<Tensor<double>> params = {p};
    auto state = AdamState<double>::for_params(params);
    adam_update(std::span(params), state);
    CHECK(state.t == 1);
    CHECK(p.data()[0] == 1.0);
    CHECK(p.data()[1] == -2.0);
    CHECK(p.data()[2] == 0.5);
  }

  TEST_CASE("first step moves each coordinate by about lr against the gradient sign") {
    Tensor<double> p({2}, {0.0, 0.0});
    p.set_requires_grad(true);
    p.grad()[0] = 3.0;
    p.grad()[1] = -0.02;
    std::vector<Tensor<double>> params = {p};
    auto state = AdamState<double>::for_params(params, AdamConfig{.lr = 0.01});
    adam_update(std::span(params), state);
    // m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
    CHECK(p.data()[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.data()[1] == doctest::Approx(0.01).epsilon(1e-5));
  }

  TEST_CASE("ten steps on x^2 follow a hand-rolled scalar recurrence") {
    Tensor<double> x = Tensor<double>::scalar(1.0);
    x.set_requires_grad(true);
    std::vector<Tensor<double>> params = {x};
    auto state = AdamState<double>::for_params(params, AdamConfig{.lr = 0.1});

    double ref = 1.0, m = 0.0, v = 0.0;
    for (int step = 1; step <= 10; ++step) {
      x.zero_grad();
      backward(mul(x, x));
      adam_update(std::span(params), state);

      const double g = 2.0 * ref;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mhat = m / (1.0 - std::pow(0.9, step));
      const double vhat = v / (1.0 - std::pow(0.999, step));
      ref -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(std::abs(x.item() - ref) <= 1e-12);
    }
  }

  TEST_CASE("missing gradient is an error") {
    Tensor<double> p({2});
    std::vector<Tensor<double>> params = {p};
    auto state = AdamState<double>::for_params(params);
    CHECK(code_of([&] { adam_update(std::span(params), state); }) == Errc::missing_gradient);
  }
}

TEST_SUITE("finite_difference_check") {
  TEST_CASE("x^2 at 3") {
    Tensor<double> x = Tensor<double>::scalar(3.0);
    CHECK(finite_difference_check([](const Tensor<double>& v) { return mul(v, v); }, x, 1e-5) < 1e-6);
  }

  TEST_CASE("detects a wrong gradient") {
    // The detached copy hides half of the true derivative from the tape.
    Tensor<double> x({3}, {0.2, 0.4, 0.6});
    auto f = [](const Tensor<double>& v) {
      cephlm::numcore::Tensor<double> detached = v.clone();
      return sum(mul(v, detached));  // analytic grad = x, numeric grad = 2x
    };
    CHECK(finite_difference_check(f, x, 1e-5) > 0.4);
  }

  TEST_CASE("conv2d followed by sum") {
    cephlm::Rng rng(9);
    auto x = random_tensor<double>({1, 6, 6}, rng);
    auto w = random_tensor<double>({2, 1, 3, 3}, rng);
    auto b = random_tensor<double>({2}, rng);
    CHECK(finite_difference_check([&](const Tensor<double>& v) { return sum(conv2d(v, w, b, Padding::same)); }, x,
                                  1e-5) < 1e-4);
  }
}
