#include "cephlm/cli/commands.hpp"

#include <cstdio>
#include <json.hpp>
#include <ostream>

#include "cephlm/binary_io.hpp"
#include "cephlm/error.hpp"
#include "cephlm/nets/checkpoint.hpp"
#include "cephlm/parallel.hpp"
#include "cephlm/patchset/dataset.hpp"
#include "cephlm/sha256.hpp"
#include "cephlm/synth/synthceph.hpp"

namespace cephlm::cli {

using nlohmann::json;
using patchset::Point;

namespace {

constexpr const char* kToolVersion = "0.1.0";

void require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw Error(Errc::missing_artifact, p.string() + " not found (" + hint + ")");
}

json point_json(Point p) { return json::array({p.x, p.y}); }

Point point_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json parse_json_file(const fs::path& p) {
  try {
    return json::parse(read_file_text(p));
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_json, p.string() + ": " + e.what());
  }
}

class Provenance {
 public:
  Provenance(std::string command, const RunConfig& cfg) : cfg_(cfg) { doc_["command"] = std::move(command); }

  void input(const std::string& name, const fs::path& p) { doc_["inputs"][name] = sha256_file(p); }

  // Stores the resolved config, then hashes every listed output.
  void finish(const fs::path& out_dir, const std::vector<std::string>& outputs) {
    const std::string text = config_text(cfg_);
    write_file_text(out_dir / kConfigFile, text);
    doc_["tool_version"] = kToolVersion;
    doc_["config_sha256"] = sha256_hex(text);
    doc_["seed"] = cfg_.seed;
    doc_["precision"] = cfg_.precision == Precision::f32 ? "f32" : "f64";
    if (!doc_.contains("inputs")) doc_["inputs"] = json::object();
    json outs = json::object();
    for (const auto& o : outputs) outs[o] = sha256_file(out_dir / o);
    doc_["outputs"] = outs;
    write_file_text(out_dir / kProvenanceFile, doc_.dump(2) + "\n");
  }

 private:
  const RunConfig& cfg_;
  json doc_;
};

template <typename Fn>
auto with_precision(const RunConfig& cfg, Fn&& fn) {
  if (cfg.precision == Precision::f32) return fn(float{});
  return fn(double{});
}

std::string case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case%04zu", i);
  return buf;
}

// Samples of the whole dataset, checked against the configured catalog.
std::vector<patchset::PatchSample> load_dataset(const RunConfig& cfg, const fs::path& dataset_dir) {
  const fs::path blob = dataset_dir / kDatasetBlob;
  require(blob, "run build-dataset first");
  require(patchset::manifest_path_for(blob), "run build-dataset first");
  patchset::DatasetManifest manifest;
  auto samples = patchset::deserialize_dataset(blob, &manifest);
  if (manifest.labels != cfg.catalog.class_labels()) {
    throw Error(Errc::config_error, "dataset labels do not match the configured landmark catalog");
  }
  return samples;
}

template <typename T>
pipeline::ModelSet<T> load_models(const RunConfig& cfg, const fs::path& pc_dir, const fs::path& pe_dir) {
  pipeline::ModelSet<T> models;
  const fs::path pc_path = pc_dir / kPcCheckpoint;
  require(pc_path, "run train-pc first");
  nets::CheckpointMeta meta;
  const auto cv = cfg.crossval();
  models.pc.model = nets::load_checkpoint<T>(pc_path, &meta, &cv.pc_arch);
  models.pc.labels = meta.labels;
  if (meta.labels != cfg.catalog.class_labels()) {
    throw Error(Errc::model_mismatch, "PC checkpoint classes do not match the configured catalog");
  }
  for (const auto& name : cfg.catalog.names()) {
    const fs::path p = pe_dir / pe_checkpoint_name(name);
    require(p, "run train-pe for " + name);
    nets::CheckpointMeta pm;
    auto m = nets::load_checkpoint<T>(p, &pm, &cv.pe_arch);
    if (pm.labels != std::vector<std::string>{name}) {
      throw Error(Errc::model_mismatch, p.string() + " is not a PE model for " + name);
    }
    models.pe.emplace(name, pipeline::PeModel<T>{std::move(m), name});
  }
  return models;
}

evalkit::LandmarkOutcome outcome_from_estimate(const std::string& name, Point truth, const json& e) {
  evalkit::LandmarkOutcome o;
  o.landmark = name;
  o.truth = truth;
  o.missing = e.at("missing").get<bool>();
  if (!o.missing) o.estimate = {e.at("x").get<double>(), e.at("y").get<double>()};
  o.missing_unfiltered = o.missing;
  o.estimate_unfiltered = o.estimate;
  if (e.contains("unfiltered")) {
    const auto& u = e["unfiltered"];
    o.missing_unfiltered = u.at("missing").get<bool>();
    if (!o.missing_unfiltered) o.estimate_unfiltered = {u.at("x").get<double>(), u.at("y").get<double>()};
  }
  return o;
}

}  // namespace

std::string pe_checkpoint_name(const std::string& landmark) { return "pe_" + landmark + ".ckpt"; }

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::config_error:
      return 2;
    case Errc::missing_artifact:
      return 3;
    case Errc::numeric_failure:
      return 4;
    default:
      return 1;
  }
}

std::vector<CaseEntry> read_cases_manifest(const fs::path& cases_dir) {
  const fs::path p = cases_dir / kCasesManifest;
  require(p, "run synth or provide a case manifest");
  const json doc = parse_json_file(p);
  std::vector<CaseEntry> out;
  try {
    for (const auto& c : doc.at("cases")) {
      out.push_back({c.at("id").get<std::string>(), cases_dir / c.at("image").get<std::string>(),
                     cases_dir / c.at("annotation").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::schema_error, p.string() + ": " + e.what());
  }
  return out;
}

std::vector<patchset::Case> load_cases(const fs::path& cases_dir, const patchset::LandmarkCatalog& catalog,
                                       std::size_t jobs) {
  const auto entries = read_cases_manifest(cases_dir);
  std::vector<patchset::Case> out(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    out[i] = patchset::load_case(entries[i].image, entries[i].annotation, catalog);
  });
  return out;
}

std::vector<evalkit::LandmarkInfo> read_observer_ellipses(const fs::path& path,
                                                          const patchset::LandmarkCatalog& catalog) {
  require(path, "observer scattergrams come from synth or must be supplied");
  const json doc = parse_json_file(path);
  std::vector<evalkit::LandmarkInfo> out;
  for (const auto& spec : catalog.specs()) {
    if (!doc.contains("landmarks") || !doc["landmarks"].contains(spec.name)) {
      throw Error(Errc::missing_artifact, path.string() + " has no scattergram for " + spec.name);
    }
    std::vector<Point> pooled;
    for (const auto& sc : doc["landmarks"][spec.name].at("scatters")) {
      std::vector<Point> pts;
      for (const auto& p : sc.at("points")) pts.push_back(point_from(p));
      if (pts.empty()) continue;
      const Point m = pipeline::aggregate(pts, pipeline::Aggregation::mean);
      for (const auto& p : pts) pooled.push_back({p.x - m.x, p.y - m.y});
    }
    out.push_back({spec.name, spec.tissue, evalkit::fit_confidence_ellipse(pooled)});
  }
  return out;
}

std::string offsets_to_json(const pipeline::ReferenceOffsets& offsets) {
  json doc = json::object();
  for (const auto& [soft, row] : offsets.table) {
    for (const auto& [hard, st] : row) {
      doc[soft][hard] = {{"median", point_json(st.median)}, {"scale", st.scale}, {"count", st.count}};
    }
  }
  return doc.dump(2) + "\n";
}

pipeline::ReferenceOffsets offsets_from_json(const std::string& text) {
  pipeline::ReferenceOffsets out;
  try {
    const json doc = json::parse(text);
    for (const auto& [soft, row] : doc.items()) {
      for (const auto& [hard, st] : row.items()) {
        out.table[soft][hard] = {point_from(st.at("median")), st.at("scale").get<double>(),
                                 st.at("count").get<std::size_t>()};
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::schema_error, std::string("reference offsets: ") + e.what());
  }
  return out;
}

std::string report_input_to_json(const evalkit::ReportInput& in) {
  json doc;
  doc["alpha"] = in.alpha_limit;
  doc["pixel_spacing_mm"] = in.pixel_spacing_mm;
  json lm = json::array();
  for (const auto& l : in.landmarks) {
    lm.push_back({{"name", l.name},
                  {"tissue", std::string(patchset::tissue_name(l.tissue))},
                  {"sigma_x", l.ellipse.sigma_x},
                  {"sigma_y", l.ellipse.sigma_y},
                  {"rho", l.ellipse.rho}});
  }
  doc["landmarks"] = lm;
  json cases = json::array();
  for (const auto& c : in.cases) {
    json ls = json::array();
    for (const auto& o : c.landmarks) {
      ls.push_back({{"landmark", o.landmark},
                    {"truth", point_json(o.truth)},
                    {"missing", o.missing},
                    {"estimate", o.missing ? json(nullptr) : point_json(o.estimate)},
                    {"missing_unfiltered", o.missing_unfiltered},
                    {"estimate_unfiltered", o.missing_unfiltered ? json(nullptr) : point_json(o.estimate_unfiltered)}});
    }
    cases.push_back({{"case_id", c.case_id}, {"fold", c.fold}, {"spacing_mm", c.spacing_mm}, {"landmarks", ls}});
  }
  doc["cases"] = cases;
  doc["folds"] = in.folds;
  doc["fold_pc_val_acc"] = in.fold_pc_val_acc;
  return doc.dump(2) + "\n";
}

evalkit::ReportInput report_input_from_json(const std::string& text) {
  evalkit::ReportInput in;
  try {
    const json doc = json::parse(text);
    in.alpha_limit = doc.at("alpha").get<double>();
    in.pixel_spacing_mm = doc.at("pixel_spacing_mm").get<double>();
    for (const auto& l : doc.at("landmarks")) {
      evalkit::LandmarkInfo info;
      info.name = l.at("name").get<std::string>();
      const auto t = patchset::parse_tissue(l.at("tissue").get<std::string>());
      if (!t) throw Error(Errc::schema_error, "bad tissue for " + info.name);
      info.tissue = *t;
      info.ellipse.sigma_x = l.at("sigma_x").get<double>();
      info.ellipse.sigma_y = l.at("sigma_y").get<double>();
      info.ellipse.rho = l.at("rho").get<double>();
      in.landmarks.push_back(info);
    }
    for (const auto& c : doc.at("cases")) {
      evalkit::CaseOutcome co;
      co.case_id = c.at("case_id").get<std::string>();
      co.fold = c.at("fold").get<std::size_t>();
      co.spacing_mm = c.at("spacing_mm").get<double>();
      for (const auto& o : c.at("landmarks")) {
        evalkit::LandmarkOutcome lo;
        lo.landmark = o.at("landmark").get<std::string>();
        lo.truth = point_from(o.at("truth"));
        lo.missing = o.at("missing").get<bool>();
        if (!lo.missing) lo.estimate = point_from(o.at("estimate"));
        lo.missing_unfiltered = o.at("missing_unfiltered").get<bool>();
        if (!lo.missing_unfiltered) lo.estimate_unfiltered = point_from(o.at("estimate_unfiltered"));
        co.landmarks.push_back(lo);
      }
      in.cases.push_back(co);
    }
    in.folds = doc.at("folds").get<std::vector<std::vector<std::string>>>();
    in.fold_pc_val_acc = doc.at("fold_pc_val_acc").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::schema_error, std::string("evaluation file: ") + e.what());
  }
  return in;
}

void cmd_synth(const RunConfig& cfg, std::size_t n_cases, const fs::path& out_dir, std::ostream& log) {
  if (cfg.catalog_name != "synth") throw Error(Errc::config_error, "synth needs catalog = \"synth\"");
  fs::create_directories(out_dir);
  Provenance prov("synth", cfg);
  std::vector<std::string> outputs;
  json manifest;
  manifest["count"] = n_cases;
  manifest["cases"] = json::array();
  std::vector<std::string> ids(n_cases);
  parallel_for(n_cases, cfg.jobs, [&](std::size_t i) {
    ids[i] = case_name(i);
    const auto sc = synth::generate_case(Rng::derive(cfg.seed, "synth/" + ids[i]).next(), cfg.synth, ids[i]);
    patchset::write_png(sc.data.ceph.image, out_dir / (ids[i] + ".png"));
    patchset::write_annotation(sc.data.annotations, out_dir / (ids[i] + ".json"));
  });
  for (const auto& id : ids) {
    manifest["cases"].push_back({{"id", id}, {"image", id + ".png"}, {"annotation", id + ".json"}});
    outputs.push_back(id + ".png");
    outputs.push_back(id + ".json");
  }
  write_file_text(out_dir / kCasesManifest, manifest.dump(2) + "\n");
  outputs.push_back(kCasesManifest);

  // Simulated annotators on cases of their own, independent of n_cases.
  json obs;
  obs["observers"] = cfg.observers;
  for (const auto& l : synth::synth_landmarks()) {
    json scatters = json::array();
    for (std::size_t k = 0; k < cfg.observer_cases; ++k) {
      const std::string id = "observer" + std::to_string(k);
      const auto sc = synth::generate_case(Rng::derive(cfg.seed, "synth/" + id).next(), cfg.synth, id);
      const Point truth = sc.data.annotations.points.at(l.name).position;
      const auto pts = synth::generate_observer_scatter(truth, l.observer_sigma_x, l.observer_sigma_y, l.observer_rho,
                                                        cfg.observers,
                                                        Rng::derive(cfg.seed, "observers/" + l.name + "/" + id).next());
      json arr = json::array();
      for (const auto& p : pts) arr.push_back(point_json(p));
      scatters.push_back({{"case", id}, {"truth", point_json(truth)}, {"points", arr}});
    }
    obs["landmarks"][l.name] = {{"tissue", std::string(patchset::tissue_name(l.tissue))}, {"scatters", scatters}};
  }
  write_file_text(out_dir / kObserversFile, obs.dump(2) + "\n");
  outputs.push_back(kObserversFile);
  prov.finish(out_dir, outputs);
  log << "wrote " << n_cases << " synthetic cases to " << out_dir.string() << "\n";
}

void cmd_build_dataset(const RunConfig& cfg, const fs::path& cases_dir, const fs::path& out_dir, std::ostream& log) {
  const auto cases = load_cases(cases_dir, cfg.catalog, cfg.jobs);
  fs::create_directories(out_dir);
  Provenance prov("build-dataset", cfg);
  prov.input("cases_manifest", cases_dir / kCasesManifest);

  std::vector<patchset::SamplingResult> per_case(cases.size());
  parallel_for(cases.size(), cfg.jobs,
               [&](std::size_t i) { per_case[i] = sample_case(cases[i], cfg.catalog, cfg.sampling, cfg.seed); });
  std::vector<patchset::PatchSample> samples;
  std::string warnings;
  for (auto& r : per_case) {
    samples.insert(samples.end(), r.samples.begin(), r.samples.end());
    for (const auto& w : r.warnings) warnings += w.case_id + " " + w.landmark + ": " + w.message + "\n";
  }
  const auto manifest = patchset::serialize_dataset(samples, cfg.catalog.class_labels(), out_dir / kDatasetBlob);

  std::vector<patchset::AnnotationSet> ann;
  for (const auto& c : cases) ann.push_back(c.annotations);
  write_file_text(out_dir / kOffsetsFile, offsets_to_json(pipeline::build_reference_offsets(ann, cfg.catalog)));
  write_file_text(out_dir / "sampling_warnings.txt", warnings);
  prov.finish(out_dir, {kDatasetBlob, patchset::manifest_path_for(kDatasetBlob).string(), kOffsetsFile,
                        "sampling_warnings.txt"});
  log << "dataset: " << manifest.count << " patches from " << cases.size() << " cases\n";
}

void cmd_train_pc(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir, std::ostream& log) {
  const auto samples = load_dataset(cfg, dataset_dir);
  fs::create_directories(out_dir);
  Provenance prov("train-pc", cfg);
  prov.input("dataset", dataset_dir / kDatasetBlob);
  with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    auto res = train_pc_model<T>(samples, cfg.catalog, cfg.crossval(), cfg.seed);
    nets::CheckpointMeta meta{cfg.catalog.class_labels(), cfg.seed, res.best_epoch, res.history};
    nets::save_checkpoint(res.model, meta, out_dir / kPcCheckpoint);
    write_file_text(out_dir / "pc_metrics.csv", res.history.to_csv());
    log << "PC: best epoch " << res.best_epoch << ", val acc " << res.history.epochs.at(res.best_epoch - 1).val_acc
        << "\n";
  });
  prov.finish(out_dir, {kPcCheckpoint, "pc_metrics.csv"});
}

void cmd_train_pe(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                  const std::vector<std::string>& landmarks, std::ostream& log) {
  std::vector<std::string> names = landmarks.empty() ? cfg.catalog.names() : landmarks;
  for (const auto& n : names) {
    if (!cfg.catalog.find(n)) throw Error(Errc::config_error, "unknown landmark '" + n + "'");
  }
  const auto samples = load_dataset(cfg, dataset_dir);
  fs::create_directories(out_dir);
  Provenance prov("train-pe", cfg);
  prov.input("dataset", dataset_dir / kDatasetBlob);
  std::vector<std::string> outputs;
  std::vector<double> val_loss(names.size());
  with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    parallel_for(names.size(), cfg.jobs, [&](std::size_t i) {
      auto res = train_pe_model<T>(samples, names[i], cfg.crossval(), cfg.seed);
      nets::CheckpointMeta meta{{names[i]}, cfg.seed, res.best_epoch, res.history};
      nets::save_checkpoint(res.model, meta, out_dir / pe_checkpoint_name(names[i]));
      write_file_text(out_dir / ("pe_" + names[i] + "_metrics.csv"), res.history.to_csv());
      val_loss[i] = res.history.epochs.at(res.best_epoch - 1).val_loss;
    });
  });
  for (std::size_t i = 0; i < names.size(); ++i) {
    outputs.push_back(pe_checkpoint_name(names[i]));
    outputs.push_back("pe_" + names[i] + "_metrics.csv");
    log << "PE " << names[i] << ": best val loss " << val_loss[i] << "\n";
  }
  prov.finish(out_dir, outputs);
}

void cmd_landmark(const RunConfig& cfg, const LandmarkArgs& args, std::ostream& log) {
  struct Input {
    patchset::Cephalogram ceph;
    std::optional<patchset::AnnotationSet> truth;
  };
  std::vector<Input> inputs;
  if (args.cases_dir) {
    for (auto& c : load_cases(*args.cases_dir, cfg.catalog, cfg.jobs)) inputs.push_back({c.ceph, c.annotations});
  }
  for (const auto& img : args.images) {
    require(img, "input image");
    patchset::Cephalogram c;
    c.id = img.stem().string();
    c.image = patchset::read_image(img);
    inputs.push_back({c, std::nullopt});
  }
  if (inputs.empty()) throw Error(Errc::config_error, "landmark needs --cases or at least one --image");

  std::optional<pipeline::ReferenceOffsets> offsets;
  if (args.dataset_dir) {
    const fs::path p = *args.dataset_dir / kOffsetsFile;
    require(p, "run build-dataset first");
    offsets = offsets_from_json(read_file_text(p));
  }
  fs::create_directories(args.out_dir);
  Provenance prov("landmark", cfg);
  prov.input("pc", args.pc_dir / kPcCheckpoint);
  std::vector<std::string> outputs;
  with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    const auto models = load_models<T>(cfg, args.pc_dir, args.pe_dir);
    pipeline::ScanConfig scan = cfg.scan;
    scan.jobs = 1;
    std::vector<pipeline::IdentifyResult> results(inputs.size());
    parallel_for(inputs.size(), cfg.jobs, [&](std::size_t i) {
      const auto& in = inputs[i];
      results[i] = pipeline::identify_landmarks(in.ceph, models, cfg.catalog, scan, offsets ? &*offsets : nullptr);
      write_file_text(args.out_dir / (in.ceph.id + ".json"), pipeline::estimates_to_json(results[i]));
      if (args.overlay) {
        pipeline::write_overlay(in.ceph, results[i], in.truth ? &*in.truth : nullptr,
                                args.out_dir / (in.ceph.id + "_overlay.png"));
      }
    });
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::string& id = inputs[i].ceph.id;
      outputs.push_back(id + ".json");
      if (args.overlay) outputs.push_back(id + "_overlay.png");
      std::size_t found = 0;
      for (const auto& e : results[i].estimates) found += !e.missing;
      log << id << ": " << found << "/" << results[i].estimates.size() << " landmarks\n";
    }
  });
  prov.finish(args.out_dir, outputs);
}

evalkit::EvaluationReport cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& log) {
  evalkit::ReportInput in;
  in.landmarks = read_observer_ellipses(args.cases_dir / kObserversFile, cfg.catalog);
  in.alpha_limit = cfg.alpha;
  in.pixel_spacing_mm = cfg.synth.pixel_spacing_mm;
  Provenance prov("evaluate", cfg);
  prov.input("cases_manifest", args.cases_dir / kCasesManifest);
  prov.input("observers", args.cases_dir / kObserversFile);

  if (args.kfold > 0) {
    const auto cases = load_cases(args.cases_dir, cfg.catalog, cfg.jobs);
    if (!cases.empty()) in.pixel_spacing_mm = cases.front().ceph.pixel_spacing_mm;
    CrossValConfig cv = cfg.crossval();
    cv.folds = args.kfold;
    const auto res = with_precision(cfg, [&](auto tag) {
      using T = decltype(tag);
      return run_crossval<T>(cases, cfg.catalog, cv, [&](const std::string& s) { log << s << "\n"; });
    });
    in.cases = res.cases;
    in.folds = res.folds;
    in.fold_pc_val_acc = res.fold_pc_val_acc;
  } else {
    if (!args.estimates_dir) throw Error(Errc::config_error, "evaluate needs --kfold or --estimates");
    for (const auto& entry : read_cases_manifest(args.cases_dir)) {
      const fs::path est = *args.estimates_dir / (entry.id + ".json");
      require(est, "run landmark on the cases first");
      const auto ann = patchset::parse_annotation_json(read_file_text(entry.annotation), cfg.catalog);
      const json doc = parse_json_file(est);
      evalkit::CaseOutcome co;
      co.case_id = entry.id;
      co.spacing_mm = ann.pixel_spacing_mm;
      in.pixel_spacing_mm = ann.pixel_spacing_mm;
      for (const auto& spec : cfg.catalog.specs()) {
        auto t = ann.points.find(spec.name);
        if (t == ann.points.end()) continue;
        if (!doc.at("estimates").contains(spec.name)) {
          throw Error(Errc::schema_error, est.string() + " has no estimate for " + spec.name);
        }
        co.landmarks.push_back(outcome_from_estimate(spec.name, t->second.position, doc["estimates"][spec.name]));
      }
      in.cases.push_back(co);
    }
  }

  fs::create_directories(args.out_dir);
  const auto report = evalkit::build_report(in);
  write_file_text(args.out_dir / kEvaluationFile, report_input_to_json(in));
  write_file_text(args.out_dir / "report.csv", evalkit::render_report(report, evalkit::ReportFormat::csv));
  write_file_text(args.out_dir / "report.json", evalkit::render_report(report, evalkit::ReportFormat::json));
  write_file_text(args.out_dir / "report.txt", evalkit::render_report(report, evalkit::ReportFormat::text));
  write_file_text(args.out_dir / "ellipses.csv", evalkit::render_ellipse_csv(report));
  prov.finish(args.out_dir, {kEvaluationFile, "report.csv", "report.json", "report.txt", "ellipses.csv"});
  log << evalkit::render_report(report, evalkit::parse_report_format(cfg.report_format));
  return report;
}

std::string cmd_report(const fs::path& evaluation, evalkit::ReportFormat format, std::optional<double> alpha) {
  require(evaluation, "run evaluate first");
  auto in = report_input_from_json(read_file_text(evaluation));
  if (alpha) {
    if (!(*alpha > 0.0 && *alpha < 1.0)) throw Error(Errc::config_error, "alpha must be in (0, 1)");
    in.alpha_limit = *alpha;
  }
  return evalkit::render_report(evalkit::build_report(in), format);
}

}  // namespace cephlm::cli
