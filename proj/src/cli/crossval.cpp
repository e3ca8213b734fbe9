#include "cephlm/cli/crossval.hpp"

#include <set>

#include "cephlm/error.hpp"
#include "cephlm/evalkit/ellipse.hpp"
#include "cephlm/parallel.hpp"
#include "cephlm/rng.hpp"

namespace cephlm::cli {

using patchset::PatchSample;

patchset::SamplingResult sample_case(const patchset::Case& c, const patchset::LandmarkCatalog& catalog,
                                     const SamplingConfig& cfg, std::uint64_t seed) {
  patchset::SamplingResult out;
  const std::string& id = c.ceph.id;
  for (const auto& spec : catalog.specs()) {
    if (!c.annotations.points.count(spec.name)) continue;
    Rng rng = Rng::derive(seed, id + "/" + spec.name);
    auto r = patchset::sample_landmark_patches(c.ceph, c.annotations, spec, rng);
    for (auto& s : r.samples) out.samples.push_back(std::move(s));
    for (auto& w : r.warnings) out.warnings.push_back(std::move(w));
  }
  if (cfg.background_per_case > 0) {
    Rng rng = Rng::derive(seed, id + "/" + std::string(patchset::kBackground));
    auto r = patchset::sample_background_patches(c.ceph, c.annotations, cfg.background_per_case, cfg.background, rng);
    for (auto& s : r.samples) out.samples.push_back(std::move(s));
    for (auto& w : r.warnings) out.warnings.push_back(std::move(w));
  }
  return out;
}

std::vector<PatchSample> pe_samples(std::span<const PatchSample> all, const std::string& landmark) {
  std::vector<PatchSample> out;
  for (const auto& s : all) {
    if (s.label == landmark && s.point_uv) out.push_back(s);
  }
  return out;
}

template <typename T>
nets::TrainResult<T> train_pc_model(std::span<const PatchSample> samples, const patchset::LandmarkCatalog& catalog,
                                    const CrossValConfig& cfg, std::uint64_t seed) {
  const auto labels = catalog.class_labels();
  nets::ModelArch arch = cfg.pc_arch;
  arch.kind = nets::ModelKind::pc;
  arch.num_classes = labels.size();
  Rng init_rng = Rng::derive(seed, "pc-init");
  const auto init = nets::build_model<T>(arch, init_rng);
  nets::TrainConfig tc = cfg.pc_train;
  tc.seed = Rng::derive(seed, "pc-train").next();
  return nets::train(init, samples, labels, tc);
}

template <typename T>
nets::TrainResult<T> train_pe_model(std::span<const PatchSample> samples, const std::string& landmark,
                                    const CrossValConfig& cfg, std::uint64_t seed) {
  nets::ModelArch arch = cfg.pe_arch;
  arch.kind = nets::ModelKind::pe;
  arch.num_classes = 0;
  Rng init_rng = Rng::derive(seed, "pe-init/" + landmark);
  const auto init = nets::build_model<T>(arch, init_rng);
  nets::TrainConfig tc = cfg.pe_train;
  tc.seed = Rng::derive(seed, "pe-train/" + landmark).next();
  const auto data = pe_samples(samples, landmark);
  return nets::train(init, std::span<const PatchSample>(data), {landmark}, tc);
}

template <typename T>
TrainedModels<T> train_models(std::span<const PatchSample> samples, const patchset::LandmarkCatalog& catalog,
                              const CrossValConfig& cfg, std::uint64_t seed) {
  TrainedModels<T> out;
  {
    auto res = train_pc_model<T>(samples, catalog, cfg, seed);
    out.pc_val_acc = res.history.epochs.at(res.best_epoch - 1).val_acc;
    out.pc_history = std::move(res.history);
    out.models.pc = {std::move(res.model), catalog.class_labels()};
  }
  const auto names = catalog.names();
  std::vector<nets::TrainResult<T>> pe(names.size());
  parallel_for(names.size(), cfg.jobs, [&](std::size_t i) { pe[i] = train_pe_model<T>(samples, names[i], cfg, seed); });
  for (std::size_t i = 0; i < names.size(); ++i) {
    out.pe_history[names[i]] = std::move(pe[i].history);
    out.models.pe.emplace(names[i], pipeline::PeModel<T>{std::move(pe[i].model), names[i]});
  }
  return out;
}

evalkit::CaseOutcome to_outcome(const pipeline::IdentifyResult& result, const patchset::AnnotationSet& truth,
                                std::size_t fold) {
  evalkit::CaseOutcome out;
  out.case_id = truth.case_id;
  out.fold = fold;
  out.spacing_mm = truth.pixel_spacing_mm;
  for (const auto& e : result.estimates) {
    auto t = truth.points.find(e.landmark);
    if (t == truth.points.end()) continue;
    evalkit::LandmarkOutcome lo;
    lo.landmark = e.landmark;
    lo.truth = t->second.position;
    lo.missing = e.missing;
    lo.estimate = e.point;
    lo.missing_unfiltered = e.missing_unfiltered;
    lo.estimate_unfiltered = e.point_unfiltered;
    out.landmarks.push_back(lo);
  }
  return out;
}

template <typename T>
CrossValResult run_crossval(std::span<const patchset::Case> cases, const patchset::LandmarkCatalog& catalog,
                            const CrossValConfig& cfg, const Progress& progress) {
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    ids.push_back(cases[i].ceph.id);
    if (!by_id.emplace(cases[i].ceph.id, i).second) {
      throw Error(Errc::invalid_argument, "duplicate case id '" + cases[i].ceph.id + "'");
    }
  }
  CrossValResult out;
  out.folds = evalkit::kfold_partition(ids, cfg.folds, cfg.seed);

  // Per-case samples are independent of the split, so draw them once.
  std::vector<std::vector<PatchSample>> per_case(cases.size());
  std::vector<std::vector<patchset::SamplingWarning>> case_warnings(cases.size());
  parallel_for(cases.size(), cfg.jobs, [&](std::size_t i) {
    auto r = sample_case(cases[i], catalog, cfg.sampling, cfg.seed);
    per_case[i] = std::move(r.samples);
    case_warnings[i] = std::move(r.warnings);
  });
  for (const auto& ws : case_warnings) {
    for (const auto& w : ws) out.warnings.push_back(w.case_id + " " + w.landmark + ": " + w.message);
  }

  const std::size_t n_folds = cfg.max_folds ? std::min(cfg.max_folds, out.folds.size()) : out.folds.size();
  for (std::size_t f = 0; f < n_folds; ++f) {
    const std::set<std::string> test(out.folds[f].begin(), out.folds[f].end());
    std::vector<PatchSample> train_set;
    std::vector<patchset::AnnotationSet> train_ann;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (test.count(ids[i])) continue;
      train_set.insert(train_set.end(), per_case[i].begin(), per_case[i].end());
      train_ann.push_back(cases[i].annotations);
    }
    say("fold " + std::to_string(f + 1) + "/" + std::to_string(n_folds) + ": training on " +
        std::to_string(train_set.size()) + " patches");
    const auto trained = train_models<T>(train_set, catalog, cfg, Rng::derive(cfg.seed, f).next());
    out.fold_pc_val_acc.push_back(trained.pc_val_acc);
    const auto offsets = pipeline::build_reference_offsets(train_ann, catalog);

    pipeline::ScanConfig scan = cfg.scan;
    scan.jobs = 1;
    const auto& fold_ids = out.folds[f];
    std::vector<pipeline::IdentifyResult> results(fold_ids.size());
    parallel_for(fold_ids.size(), cfg.jobs, [&](std::size_t j) {
      const auto& c = cases[by_id.at(fold_ids[j])];
      results[j] = pipeline::identify_landmarks(c.ceph, trained.models, catalog, scan, &offsets);
    });
    for (std::size_t j = 0; j < fold_ids.size(); ++j) {
      const auto& c = cases[by_id.at(fold_ids[j])];
      out.cases.push_back(to_outcome(results[j], c.annotations, f));
      for (const auto& w : results[j].warnings) out.warnings.push_back(fold_ids[j] + ": " + w);
    }
    say("fold " + std::to_string(f + 1) + ": PC val acc " + std::to_string(trained.pc_val_acc));
  }
  return out;
}

#define CEPHLM_INSTANTIATE_TRAINERS(T)                                                                          \
  template nets::TrainResult<T> train_pc_model<T>(std::span<const PatchSample>, const patchset::LandmarkCatalog&, \
                                                  const CrossValConfig&, std::uint64_t);                          \
  template nets::TrainResult<T> train_pe_model<T>(std::span<const PatchSample>, const std::string&,               \
                                                  const CrossValConfig&, std::uint64_t);

CEPHLM_INSTANTIATE_TRAINERS(float)
CEPHLM_INSTANTIATE_TRAINERS(double)

template TrainedModels<float> train_models<float>(std::span<const PatchSample>, const patchset::LandmarkCatalog&,
                                                  const CrossValConfig&, std::uint64_t);
template TrainedModels<double> train_models<double>(std::span<const PatchSample>, const patchset::LandmarkCatalog&,
                                                    const CrossValConfig&, std::uint64_t);
template CrossValResult run_crossval<float>(std::span<const patchset::Case>, const patchset::LandmarkCatalog&,
                                            const CrossValConfig&, const Progress&);
template CrossValResult run_crossval<double>(std::span<const patchset::Case>, const patchset::LandmarkCatalog&,
                                             const CrossValConfig&, const Progress&);

}  // namespace cephlm::cli
