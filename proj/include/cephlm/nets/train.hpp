#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cephlm/nets/model.hpp"
#include "cephlm/numcore/adam.hpp"
#include "cephlm/patchset/patches.hpp"

namespace cephlm::nets {

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 128;
  numcore::AdamConfig adam;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 0;  // 0 disables
  bool augment = true;
  patchset::AugmentConfig augment_cfg;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;  // NaN for PE
};

struct MetricsHistory {
  std::vector<EpochMetrics> epochs;

  // epoch,train_loss,val_loss,val_acc; val_acc is empty for PE.
  std::string to_csv() const;
};

template <typename T>
struct TrainResult {
  Model<T> model;  // best-validation snapshot
  MetricsHistory history;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// PC: `labels` are the class names in head order and every class must occur
// in the training split. PE: `labels` holds the single landmark name and every
// sample must carry that label and a point. Errors: empty_input, class_absent,
// invalid_argument, numeric_failure (non-finite loss).
template <typename T>
TrainResult<T> train(const Model<T>& init, std::span<const patchset::PatchSample> samples,
                     const std::vector<std::string>& labels, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Patch pixels scaled to [0,1], as the models consume them.
void patch_to_float(const patchset::PatchPixels& pixels, float* dst);

extern template struct TrainResult<float>;
extern template struct TrainResult<double>;

}  // namespace cephlm::nets
