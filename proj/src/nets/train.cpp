#include "cephlm/nets/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "cephlm/error.hpp"
#include "cephlm/numcore/ops.hpp"

namespace cephlm::nets {

using numcore::Shape;
using patchset::PatchSample;

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(Errc::config_error, "batch_size must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error(Errc::config_error, "validation_fraction must be in (0, 1)");
  }
  if (epochs < 1) throw Error(Errc::config_error, "epochs must be >= 1");
  if (adam.lr < 0.0) throw Error(Errc::config_error, "learning rate must be >= 0");
}

std::string MetricsHistory::to_csv() const {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',';
    if (!std::isnan(e.val_acc)) out << e.val_acc;
    out << '\n';
  }
  return out.str();
}

void patch_to_float(const patchset::PatchPixels& pixels, float* dst) {
  for (std::size_t i = 0; i < pixels.size(); ++i) dst[i] = static_cast<float>(pixels[i]) / 255.0f;
}

namespace {

template <typename T>
struct Batch {
  Tensor<T> x;
  std::vector<std::size_t> labels;
  Tensor<T> targets;
};

template <typename T>
Batch<T> make_batch(const ModelArch& arch, std::span<const PatchSample> samples, std::span<const std::size_t> idx,
                    const std::vector<std::size_t>& label_ids, Rng* aug_rng, const patchset::AugmentConfig& aug) {
  const std::size_t s = arch.input_size, per = s * s;
  if (per != patchset::kPatchPixels) throw Error(Errc::shape_mismatch, "model input size must match 64x64 patches");
  Batch<T> b;
  b.x = Tensor<T>(Shape{idx.size(), 1, s, s});
  if (arch.kind == ModelKind::pe) b.targets = Tensor<T>(Shape{idx.size(), 2});
  std::vector<float> buf(per);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const PatchSample& src = samples[idx[i]];
    const PatchSample view = aug_rng ? patchset::augment(src, *aug_rng, aug) : src;
    patch_to_float(view.pixels, buf.data());
    std::copy(buf.begin(), buf.end(), b.x.ptr() + i * per);
    if (arch.kind == ModelKind::pc) {
      b.labels.push_back(label_ids[idx[i]]);
    } else {
      b.targets.ptr()[2 * i] = static_cast<T>((*view.point_uv)[0]);
      b.targets.ptr()[2 * i + 1] = static_cast<T>((*view.point_uv)[1]);
    }
  }
  return b;
}

template <typename T>
struct LossOut {
  Tensor<T> loss;
  std::size_t correct = 0;
};

template <typename T>
LossOut<T> batch_loss(const Model<T>& model, const Batch<T>& b) {
  const Tensor<T> out = model.forward(b.x);
  LossOut<T> r;
  if (model.arch().kind == ModelKind::pc) {
    auto sce = numcore::softmax_cross_entropy(out, std::span<const std::size_t>(b.labels));
    r.loss = sce.loss;
    const std::size_t c = out.dim(1);
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
      const T* row = sce.probs.ptr() + i * c;
      if (static_cast<std::size_t>(std::max_element(row, row + c) - row) == b.labels[i]) ++r.correct;
    }
  } else {
    r.loss = numcore::mse_loss(out, b.targets);
  }
  return r;
}

}  // namespace

template <typename T>
TrainResult<T> train(const Model<T>& init, std::span<const PatchSample> samples, const std::vector<std::string>& labels,
                     const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const ModelArch& arch = init.arch();
  if (samples.empty()) throw Error(Errc::empty_input, "training dataset is empty");
  if (samples.size() < 2) throw Error(Errc::empty_input, "need at least 2 samples for a validation split");

  std::vector<std::size_t> label_ids(samples.size(), 0);
  if (arch.kind == ModelKind::pc) {
    if (labels.size() != arch.num_classes) {
      throw Error(Errc::model_mismatch, "PC head has " + std::to_string(arch.num_classes) + " outputs but " +
                                            std::to_string(labels.size()) + " labels were given");
    }
    std::map<std::string, std::size_t> ids;
    for (std::size_t i = 0; i < labels.size(); ++i) ids[labels[i]] = i;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto it = ids.find(samples[i].label);
      if (it == ids.end()) throw Error(Errc::invalid_argument, "sample label '" + samples[i].label + "' is not a class");
      label_ids[i] = it->second;
    }
  } else {
    if (labels.size() != 1) throw Error(Errc::invalid_argument, "PE training takes exactly one landmark");
    for (const auto& s : samples) {
      if (s.label != labels[0] || !s.point_uv) {
        throw Error(Errc::invalid_argument, "PE training data must all be points of landmark '" + labels[0] + "'");
      }
    }
  }

  // Sample-level split, fixed by the seed.
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = Rng::derive(cfg.seed, "split");
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.validation_fraction * static_cast<double>(order.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());

  if (arch.kind == ModelKind::pc) {
    std::vector<bool> seen(labels.size(), false);
    for (auto i : tr) seen[label_ids[i]] = true;
    for (std::size_t c = 0; c < labels.size(); ++c) {
      if (!seen[c]) throw Error(Errc::class_absent, "class '" + labels[c] + "' is absent from the training split");
    }
  }

  TrainResult<T> result;
  result.model = init.clone();
  Model<T> model = init.clone();
  auto state = numcore::AdamState<T>::for_params(model.params(), cfg.adam);
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng = Rng::derive(cfg.seed, epoch);
    std::vector<std::size_t> perm = tr;
    epoch_rng.shuffle(perm);
    Rng aug_rng = Rng::derive(epoch_rng.next(), "augment");

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(perm.data() + start, end - start);
      const auto b = make_batch<T>(arch, samples, idx, label_ids, cfg.augment ? &aug_rng : nullptr, cfg.augment_cfg);
      for (auto& p : model.params()) p.zero_grad();
      auto lo = batch_loss(model, b);
      const double l = static_cast<double>(lo.loss.item());
      if (!std::isfinite(l)) throw Error(Errc::numeric_failure, "non-finite training loss at epoch " + std::to_string(epoch));
      numcore::backward(lo.loss);
      numcore::adam_update(std::span<Tensor<T>>(model.params()), state);
      loss_sum += l * static_cast<double>(idx.size());
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(perm.size());
    {
      numcore::NoGradGuard guard;
      double vsum = 0.0;
      std::size_t correct = 0;
      for (std::size_t start = 0; start < val.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(val.size(), start + cfg.batch_size);
        std::span<const std::size_t> idx(val.data() + start, end - start);
        const auto b = make_batch<T>(arch, samples, idx, label_ids, nullptr, cfg.augment_cfg);
        auto lo = batch_loss(model, b);
        vsum += static_cast<double>(lo.loss.item()) * static_cast<double>(idx.size());
        correct += lo.correct;
      }
      m.val_loss = vsum / static_cast<double>(val.size());
      m.val_acc = arch.kind == ModelKind::pc ? static_cast<double>(correct) / static_cast<double>(val.size())
                                             : std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(m.val_loss)) throw Error(Errc::numeric_failure, "non-finite validation loss");
    result.history.epochs.push_back(m);
    if (on_epoch) on_epoch(m);

    if (m.val_loss < best) {
      best = m.val_loss;
      result.best_epoch = epoch;
      result.model = model.clone();
      since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

#define CEPHLM_INSTANTIATE_TRAIN(T)                                                                           \
  template struct TrainResult<T>;                                                                            \
  template TrainResult<T> train<T>(const Model<T>&, std::span<const PatchSample>, const std::vector<std::string>&, \
                                   const TrainConfig&, const EpochCallback&);

CEPHLM_INSTANTIATE_TRAIN(float)
CEPHLM_INSTANTIATE_TRAIN(double)

}  // namespace cephlm::nets
