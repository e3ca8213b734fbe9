#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cephlm::numcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

// Recorded operation: the inputs it read and how to push the output gradient
// back into them.
template <typename T>
struct Node {
  std::vector<Tensor<T>> inputs;
  std::function<void(std::span<const T> grad_out)> backward;
};

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // sized iff requires_grad (lazily for non-leaves)
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;  // null for leaves
};

/// Dense row-major array. Copies share storage, as with a handle; use
/// clone() for an independent buffer.
template <typename T>
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t i) const { return storage_->shape.at(i); }
  std::size_t numel() const { return storage_->data.size(); }

  std::span<T> data() { return storage_->data; }
  std::span<const T> data() const { return storage_->data; }
  T* ptr() { return storage_->data.data(); }
  const T* ptr() const { return storage_->data.data(); }
  T item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return storage_->grad.size() == storage_->data.size() && storage_->requires_grad; }
  std::span<T> grad() { return storage_->grad; }
  std::span<const T> grad() const { return storage_->grad; }
  void zero_grad();

  bool is_leaf() const { return storage_->node == nullptr; }

  Tensor clone() const;   // deep copy of data, detached
  Tensor detach() const;  // shares data, no graph, no grad
  Tensor reshaped(Shape shape) const;  // differentiable view-copy

  const std::shared_ptr<TensorStorage<T>>& storage() const { return storage_; }

 private:
  std::shared_ptr<TensorStorage<T>> storage_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Builds an op result, attaching a backward node only when some input
// requires a gradient and recording is enabled.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>)> backward);

// Gradient buffer of t for accumulation, or nullptr if t takes no gradient.
template <typename T>
T* grad_target(const Tensor<T>& t);

/// Reverse-mode pass from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed each time.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cephlm::numcore
