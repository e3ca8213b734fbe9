#include "cephlm/nets/model.hpp"

#include <cmath>

#include "cephlm/error.hpp"
#include "cephlm/numcore/ops.hpp"

namespace cephlm::nets {

using numcore::Padding;
using numcore::Shape;

std::string_view kind_name(ModelKind k) { return k == ModelKind::pc ? "pc" : "pe"; }

ModelKind parse_kind(std::string_view s) {
  if (s == "pc") return ModelKind::pc;
  if (s == "pe") return ModelKind::pe;
  throw Error(Errc::config_error, "unknown model kind '" + std::string(s) + "'");
}

void ModelArch::validate() const {
  if (conv_channels.size() != 3) {
    throw Error(Errc::invalid_argument, "conv_channels must list exactly 3 stages, got " +
                                            std::to_string(conv_channels.size()));
  }
  for (auto c : conv_channels) {
    if (c == 0) throw Error(Errc::invalid_argument, "conv channel counts must be positive");
  }
  if (kernel % 2 == 0 || kernel == 0) throw Error(Errc::invalid_argument, "kernel must be odd");
  if (fc_width == 0) throw Error(Errc::invalid_argument, "fc_width must be positive");
  if (input_size == 0 || input_size % 8 != 0) throw Error(Errc::invalid_argument, "input_size must be a multiple of 8");
  if (kind == ModelKind::pc && num_classes < 2) throw Error(Errc::invalid_argument, "PC needs at least 2 classes");
}

template <typename T>
Model<T>::Model(ModelArch arch, std::vector<Tensor<T>> params) : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  if (params_.size() != 12) throw Error(Errc::model_mismatch, "model expects 12 parameter tensors");
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x) const {
  const std::size_t s = arch_.input_size;
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != s || x.dim(3) != s) {
    throw Error(Errc::shape_mismatch, "model input must be [N,1," + std::to_string(s) + "," + std::to_string(s) +
                                          "], got " + numcore::shape_str(x.shape()));
  }
  Tensor<T> h = x;
  for (int i = 0; i < 3; ++i) {
    h = numcore::maxpool2(numcore::relu(numcore::conv2d(h, params_[2 * i], params_[2 * i + 1], Padding::same)));
  }
  h = numcore::flatten(h, true);
  h = numcore::relu(numcore::dense(h, params_[6], params_[7]));
  h = numcore::relu(numcore::dense(h, params_[8], params_[9]));
  return numcore::dense(h, params_[10], params_[11]);
}

template <typename T>
Model<T> Model<T>::clone() const {
  std::vector<Tensor<T>> copy;
  for (const auto& p : params_) copy.push_back(p.clone().set_requires_grad(p.requires_grad()));
  return Model(arch_, std::move(copy));
}

template <typename T>
Model<T> build_model(const ModelArch& arch, Rng& rng) {
  arch.validate();
  std::vector<Tensor<T>> params;
  auto he = [&](Shape shape, std::size_t fan_in) {
    Tensor<T> w(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.data()) v = static_cast<T>(rng.normal() * sd);
    w.set_requires_grad(true);
    params.push_back(w);
  };
  auto bias = [&](std::size_t n, T value) {
    Tensor<T> b(Shape{n}, value);
    b.set_requires_grad(true);
    params.push_back(b);
  };
  std::size_t c_in = 1;
  const std::size_t k = arch.kernel;
  for (auto c : arch.conv_channels) {
    he({c, c_in, k, k}, c_in * k * k);
    bias(c, T(0));
    c_in = c;
  }
  const std::size_t flat = c_in * arch.pooled_size() * arch.pooled_size();
  he({arch.fc_width, flat}, flat);
  bias(arch.fc_width, T(0));
  he({arch.fc_width, arch.fc_width}, arch.fc_width);
  bias(arch.fc_width, T(0));
  he({arch.outputs(), arch.fc_width}, arch.fc_width);
  bias(arch.outputs(), arch.kind == ModelKind::pe ? T(0.5) : T(0));
  return Model<T>(arch, std::move(params));
}

namespace {

template <typename T>
Tensor<T> input_batch(const ModelArch& arch, std::span<const float> patches) {
  const std::size_t per = arch.input_size * arch.input_size;
  if (patches.empty() || patches.size() % per != 0) {
    throw Error(Errc::shape_mismatch, "patch data must be a positive multiple of " + std::to_string(per) + " values");
  }
  const std::size_t n = patches.size() / per;
  Tensor<T> x(Shape{n, 1, arch.input_size, arch.input_size});
  auto d = x.data();
  for (std::size_t i = 0; i < patches.size(); ++i) d[i] = static_cast<T>(patches[i]);
  return x;
}

}  // namespace

template <typename T>
std::vector<std::vector<double>> predict_pc(const Model<T>& model, std::span<const float> patches) {
  if (model.arch().kind != ModelKind::pc) throw Error(Errc::model_mismatch, "predict_pc needs a PC model");
  numcore::NoGradGuard guard;
  const Tensor<T> logits = model.forward(input_batch<T>(model.arch(), patches));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<std::vector<double>> out(n, std::vector<double>(c));
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += out[i][j] = std::exp(static_cast<double>(row[j]) - mx);
    for (auto& p : out[i]) p /= total;
  }
  return out;
}

template <typename T>
std::vector<std::array<double, 2>> predict_pe(const Model<T>& model, std::span<const float> patches) {
  if (model.arch().kind != ModelKind::pe) throw Error(Errc::model_mismatch, "predict_pe needs a PE model");
  numcore::NoGradGuard guard;
  const Tensor<T> uv = model.forward(input_batch<T>(model.arch(), patches));
  std::vector<std::array<double, 2>> out(uv.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {static_cast<double>(uv.ptr()[2 * i]), static_cast<double>(uv.ptr()[2 * i + 1])};
  return out;
}

#define CEPHLM_INSTANTIATE_MODEL(T)                                                             \
  template class Model<T>;                                                                      \
  template Model<T> build_model<T>(const ModelArch&, Rng&);                                     \
  template std::vector<std::vector<double>> predict_pc<T>(const Model<T>&, std::span<const float>); \
  template std::vector<std::array<double, 2>> predict_pe<T>(const Model<T>&, std::span<const float>);

CEPHLM_INSTANTIATE_MODEL(float)
CEPHLM_INSTANTIATE_MODEL(double)

}  // namespace cephlm::nets
