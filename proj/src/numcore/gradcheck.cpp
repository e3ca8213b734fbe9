#include "cephlm/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cephlm::numcore {

namespace {

// Below the floor the difference quotient is dominated by roundoff, so tiny
// gradients are compared on an absolute scale.
double relative_error(double analytic, double central) {
  const double denom = std::max({std::abs(analytic), std::abs(central), kGradcheckFloor});
  return std::abs(analytic - central) / denom;
}

// Fourth-order central difference; its small truncation error lets eps stay
// large enough to keep roundoff well under the tolerance.
template <typename Eval>
double five_point(Eval&& at, double eps) {
  return (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
}

}  // namespace

double finite_difference_check(const ScalarFn& f, Tensor<double> x, double eps) {
  x.set_requires_grad(true);
  backward(f(x));
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  auto data = x.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    auto at = [&](double h) {
      data[i] = saved + h;
      const double v = f(x).item();
      data[i] = saved;
      return v;
    };
    worst = std::max(worst, relative_error(analytic[i], five_point(at, eps)));
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> params,
                               double eps) {
  for (auto& p : params) {
    if (!p.requires_grad()) p.set_requires_grad(true);
    p.zero_grad();
  }
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      auto at = [&](double h) {
        data[i] = saved + h;
        const double v = f().item();
        data[i] = saved;
        return v;
      };
      worst = std::max(worst, relative_error(analytic[k][i], five_point(at, eps)));
    }
  }
  return worst;
}

}  // namespace cephlm::numcore
