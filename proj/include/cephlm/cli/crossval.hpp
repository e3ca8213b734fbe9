#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cephlm/evalkit/report.hpp"
#include "cephlm/nets/model.hpp"
#include "cephlm/nets/train.hpp"
#include "cephlm/patchset/annotation.hpp"
#include "cephlm/patchset/patches.hpp"
#include "cephlm/pipeline/pipeline.hpp"

namespace cephlm::cli {

// How training patches are drawn from each annotated case.
struct SamplingConfig {
  std::size_t background_per_case = 10;
  patchset::BackgroundSpec background;
};

struct CrossValConfig {
  std::size_t folds = 9;
  std::uint64_t seed = 0;
  nets::ModelArch pc_arch;
  nets::ModelArch pe_arch{nets::ModelKind::pe};
  nets::TrainConfig pc_train;
  nets::TrainConfig pe_train;
  SamplingConfig sampling;
  pipeline::ScanConfig scan;
  double alpha_limit = 0.01;
  std::size_t jobs = 1;
  std::size_t max_folds = 0;  // evaluate only the first n folds; 0 = all
};

// Landmark and background samples for one case, seeded by (seed, case id) so
// they do not depend on fold membership.
patchset::SamplingResult sample_case(const patchset::Case& c, const patchset::LandmarkCatalog& catalog,
                                     const SamplingConfig& cfg, std::uint64_t seed);

// Samples carrying `landmark`, the training set of its PE model.
std::vector<patchset::PatchSample> pe_samples(std::span<const patchset::PatchSample> all, const std::string& landmark);

// One PC over catalog.class_labels() and one PE for `landmark`; weights and
// sample order follow from `seed` alone.
template <typename T>
nets::TrainResult<T> train_pc_model(std::span<const patchset::PatchSample> samples,
                                    const patchset::LandmarkCatalog& catalog, const CrossValConfig& cfg,
                                    std::uint64_t seed);

template <typename T>
nets::TrainResult<T> train_pe_model(std::span<const patchset::PatchSample> samples, const std::string& landmark,
                                    const CrossValConfig& cfg, std::uint64_t seed);

template <typename T>
struct TrainedModels {
  pipeline::ModelSet<T> models;
  double pc_val_acc = 0.0;  // at the best epoch
  nets::MetricsHistory pc_history;
  std::map<std::string, nets::MetricsHistory> pe_history;
};

// PC on every sample, then one PE per catalog landmark (fanned out over jobs;
// each model trains single-threaded from its own seed).
template <typename T>
TrainedModels<T> train_models(std::span<const patchset::PatchSample> samples, const patchset::LandmarkCatalog& catalog,
                              const CrossValConfig& cfg, std::uint64_t seed);

evalkit::CaseOutcome to_outcome(const pipeline::IdentifyResult& result, const patchset::AnnotationSet& truth,
                                std::size_t fold);

struct CrossValResult {
  std::vector<std::vector<std::string>> folds;
  std::vector<double> fold_pc_val_acc;
  std::vector<evalkit::CaseOutcome> cases;  // fold order, then case order within the fold
  std::vector<std::string> warnings;
};

using Progress = std::function<void(const std::string&)>;

template <typename T>
CrossValResult run_crossval(std::span<const patchset::Case> cases, const patchset::LandmarkCatalog& catalog,
                            const CrossValConfig& cfg, const Progress& progress = {});

}  // namespace cephlm::cli
