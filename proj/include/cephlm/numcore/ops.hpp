#pragma once

#include <cstddef>
#include <span>

#include "cephlm/numcore/tensor.hpp"

namespace cephlm::numcore {

enum class Padding { same, valid };

// input [C_in,H,W] or batched [N,C_in,H,W]; kernels [C_out,C_in,k,k]; bias [C_out].
// Same padding zero-pads (k-1)/2 on every side.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias, Padding padding);

// 2x2 stride-2 max pool over [C,H,W] or [N,C,H,W]. Gradient goes to the first
// (row-major) maximal cell of each block.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& input);

// Gradient at exactly 0 is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& input);

// input [n] or [N,n]; weights [m,n]; bias [m].
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

// Collapses all but the leading batch dimension; rank-3 input flattens fully.
template <typename T>
Tensor<T> flatten(const Tensor<T>& input, bool batched);

template <typename T>
struct SoftmaxCrossEntropy {
  Tensor<T> loss;   // scalar, mean over the batch
  Tensor<T> probs;  // same shape as logits, not differentiable
};

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label);

// Batched: logits [N,C], one label per row, loss is the batch mean.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels);

// Mean of squared differences over all elements.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
Tensor<T> sum(const Tensor<T>& input);

// Elementwise product of equal shapes.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace cephlm::numcore
