#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cephlm/numcore/tensor.hpp"
#include "cephlm/rng.hpp"

namespace cephlm::nets {

using numcore::Tensor;

enum class ModelKind { pc, pe };

std::string_view kind_name(ModelKind k);
ModelKind parse_kind(std::string_view s);

// Three conv(3x3, same)+ReLU+pool2 stages, two ReLU dense layers, then the
// head: num_classes logits for PC, two linear outputs (u, v) for PE.
struct ModelArch {
  ModelKind kind = ModelKind::pc;
  std::vector<std::size_t> conv_channels{32, 64, 128};
  std::size_t kernel = 3;
  std::size_t fc_width = 256;
  std::size_t num_classes = 0;  // PC only
  std::size_t input_size = 64;

  std::size_t outputs() const { return kind == ModelKind::pc ? num_classes : 2; }
  std::size_t pooled_size() const { return input_size / 8; }
  void validate() const;
  bool operator==(const ModelArch&) const = default;
};

template <typename T>
class Model {
 public:
  Model() = default;
  Model(ModelArch arch, std::vector<Tensor<T>> params);

  const ModelArch& arch() const { return arch_; }

  // Order: conv{w,b} x3, fc1{w,b}, fc2{w,b}, head{w,b}.
  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  std::size_t parameter_count() const;

  // x is [N,1,S,S]; returns [N, outputs()] logits (PC) or (u, v) (PE).
  Tensor<T> forward(const Tensor<T>& x) const;

  // Independent copy of the weights.
  Model clone() const;

 private:
  ModelArch arch_;
  std::vector<Tensor<T>> params_;
};

// He-normal weights (std sqrt(2 / fan_in)), zero biases; the PE head bias
// starts at 0.5 so untrained estimates sit at the patch centre.
template <typename T>
Model<T> build_model(const ModelArch& arch, Rng& rng);

// Probabilities over the PC classes for n patches laid out back to back
// (n * S * S values in [0,1]). Returns n rows of num_classes.
template <typename T>
std::vector<std::vector<double>> predict_pc(const Model<T>& model, std::span<const float> patches);

// Raw (u, v) head output for n patches.
template <typename T>
std::vector<std::array<double, 2>> predict_pe(const Model<T>& model, std::span<const float> patches);

// Downstream clamp range for PE outputs.
inline constexpr double kPeClampLo = -0.25;
inline constexpr double kPeClampHi = 1.25;

extern template class Model<float>;
extern template class Model<double>;

}  // namespace cephlm::nets
