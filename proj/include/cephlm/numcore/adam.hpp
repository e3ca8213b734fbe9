#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cephlm/numcore/tensor.hpp"

namespace cephlm::numcore {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> m;  // first moment, one buffer per parameter
  std::vector<std::vector<T>> v;  // second moment
  std::uint64_t t = 0;

  // Zeroed moments shaped like params.
  static AdamState for_params(std::span<const Tensor<T>> params, AdamConfig config = {});
};

// One bias-corrected Adam step over params using their accumulated gradients:
//   t += 1;  m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <typename T>
void adam_update(std::span<Tensor<T>> params, AdamState<T>& state);

}  // namespace cephlm::numcore
