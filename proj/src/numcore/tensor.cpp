#include "cephlm/numcore/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "cephlm/error.hpp"

namespace cephlm::numcore {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_mode_enabled() { return t_grad_enabled; }

template <typename T>
Tensor<T>::Tensor() : storage_(std::make_shared<TensorStorage<T>>()) {
  storage_->shape = {1};
  storage_->data.assign(1, T(0));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : storage_(std::make_shared<TensorStorage<T>>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw Error(Errc::shape_mismatch, "tensor dimensions must be positive: " + shape_str(shape));
  }
  storage_->data.assign(shape_numel(shape), fill);
  storage_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : storage_(std::make_shared<TensorStorage<T>>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw Error(Errc::shape_mismatch, "tensor dimensions must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw Error(Errc::shape_mismatch, "data length " + std::to_string(data.size()) + " does not match shape " +
                                          shape_str(shape));
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw Error(Errc::not_scalar, "item() on tensor of shape " + shape_str(shape()));
  return storage_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  storage_->requires_grad = on;
  if (on) {
    storage_->grad.assign(storage_->data.size(), T(0));
  } else {
    storage_->grad.clear();
  }
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(storage_->shape, storage_->data);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return clone();
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw Error(Errc::shape_mismatch, "cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
  }
  const std::size_t n = numel();
  return make_result<T>(std::move(shape), storage_->data, {*this}, [self = *this, n](std::span<const T> g) {
    if (T* dst = grad_target(self)) {
      for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!t_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& st = *out.storage();
  st.requires_grad = true;
  st.node = std::make_shared<Node<T>>(Node<T>{std::move(inputs), std::move(backward)});
  return out;
}

template <typename T>
T* grad_target(const Tensor<T>& t) {
  auto& st = *t.storage();
  if (!st.requires_grad) return nullptr;
  if (st.grad.size() != st.data.size()) st.grad.assign(st.data.size(), T(0));
  return st.grad.data();
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw Error(Errc::not_scalar, "backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error(Errc::missing_gradient, "loss does not depend on any tensor that requires a gradient");
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<TensorStorage<T>*> order;
  std::unordered_set<TensorStorage<T>*> seen;
  std::vector<std::pair<TensorStorage<T>*, std::size_t>> stack;
  stack.emplace_back(loss.storage().get(), 0);
  seen.insert(loss.storage().get());
  while (!stack.empty()) {
    auto& [st, next] = stack.back();
    if (st->node && next < st->node->inputs.size()) {
      TensorStorage<T>* child = st->node->inputs[next++].storage().get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(st);
      stack.pop_back();
    }
  }

  for (TensorStorage<T>* st : order) {
    if (st->node) st->grad.assign(st->data.size(), T(0));
  }
  TensorStorage<T>* root = loss.storage().get();
  if (root->grad.size() != 1) root->grad.assign(1, T(0));
  root->grad[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorStorage<T>* st = *it;
    if (st->node) st->node->backward(std::span<const T>(st->grad));
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(std::span<const float>)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(std::span<const double>)>);
template float* grad_target(const Tensor<float>&);
template double* grad_target(const Tensor<double>&);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace cephlm::numcore
