#include "cephlm/numcore/adam.hpp"

#include <cmath>
#include <string>

#include "cephlm/error.hpp"

namespace cephlm::numcore {

template <typename T>
AdamState<T> AdamState<T>::for_params(std::span<const Tensor<T>> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.m.emplace_back(p.numel(), T(0));
    state.v.emplace_back(p.numel(), T(0));
  }
  return state;
}

template <typename T>
void adam_update(std::span<Tensor<T>> params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(Errc::shape_mismatch, "Adam state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw Error(Errc::missing_gradient, "parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw Error(Errc::shape_mismatch, "Adam moments for parameter " + std::to_string(i) + " have the wrong size");
    }
  }

  state.t += 1;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.t);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T bias1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T bias2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.lr);
  const T eps = static_cast<T>(c.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].data();
    auto grad = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const T g = grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const T mhat = m[j] / bias1;
      const T vhat = v[j] / bias2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_update(std::span<Tensor<float>>, AdamState<float>&);
template void adam_update(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace cephlm::numcore
