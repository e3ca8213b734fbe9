#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cephlm/cli/config.hpp"
#include "cephlm/error.hpp"
#include "cephlm/evalkit/report.hpp"

namespace cephlm::cli {

namespace fs = std::filesystem;

// Artifact names shared by the stages.
inline constexpr const char* kCasesManifest = "cases.json";
inline constexpr const char* kObserversFile = "observers.json";
inline constexpr const char* kDatasetBlob = "dataset.bin";
inline constexpr const char* kOffsetsFile = "reference_offsets.json";
inline constexpr const char* kPcCheckpoint = "pc.ckpt";
inline constexpr const char* kConfigFile = "run_config.toml";
inline constexpr const char* kProvenanceFile = "provenance.json";
inline constexpr const char* kEvaluationFile = "evaluation.json";

std::string pe_checkpoint_name(const std::string& landmark);

struct CaseEntry {
  std::string id;
  fs::path image;
  fs::path annotation;
};

// Errors: missing_artifact when the directory has no case manifest.
std::vector<CaseEntry> read_cases_manifest(const fs::path& cases_dir);
std::vector<patchset::Case> load_cases(const fs::path& cases_dir, const patchset::LandmarkCatalog& catalog,
                                       std::size_t jobs = 1);

// Per landmark, the observer scattergrams of several cases; each is centred
// on its own mean and the pooled deviations give the landmark's ellipse.
std::vector<evalkit::LandmarkInfo> read_observer_ellipses(const fs::path& path,
                                                          const patchset::LandmarkCatalog& catalog);

std::string offsets_to_json(const pipeline::ReferenceOffsets& offsets);
pipeline::ReferenceOffsets offsets_from_json(const std::string& text);

std::string report_input_to_json(const evalkit::ReportInput& input);
evalkit::ReportInput report_input_from_json(const std::string& text);

// Every command writes run_config.toml and provenance.json next to its outputs.
void cmd_synth(const RunConfig& cfg, std::size_t n_cases, const fs::path& out_dir, std::ostream& log);
void cmd_build_dataset(const RunConfig& cfg, const fs::path& cases_dir, const fs::path& out_dir, std::ostream& log);
void cmd_train_pc(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir, std::ostream& log);
// Empty `landmarks` trains every catalog landmark.
void cmd_train_pe(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                  const std::vector<std::string>& landmarks, std::ostream& log);

struct LandmarkArgs {
  fs::path pc_dir;
  fs::path pe_dir;
  std::optional<fs::path> dataset_dir;  // reference offsets for the soft-tissue filter
  std::optional<fs::path> cases_dir;
  std::vector<fs::path> images;
  fs::path out_dir;
  bool overlay = false;
};
void cmd_landmark(const RunConfig& cfg, const LandmarkArgs& args, std::ostream& log);

struct EvaluateArgs {
  fs::path cases_dir;
  std::size_t kfold = 0;                  // > 0: train and test every fold end to end
  std::optional<fs::path> estimates_dir;  // kfold == 0: score cmd_landmark output
  fs::path out_dir;
};
// Writes report.{csv,json,txt}, ellipses.csv and evaluation.json.
evalkit::EvaluationReport cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& log);

// Re-renders an evaluation.json, optionally at another alpha.
std::string cmd_report(const fs::path& evaluation, evalkit::ReportFormat format, std::optional<double> alpha);

// 0 success, 2 config error, 3 missing dependency artifact, 4 numeric failure, 1 anything else.
int exit_code_for(Errc code);

}  // namespace cephlm::cli
