#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "cephlm/cli/crossval.hpp"
#include "cephlm/patchset/catalog.hpp"
#include "cephlm/synth/synthceph.hpp"

namespace cephlm::cli {

// Subset of TOML: [table] and [a.b] headers, key = value with strings,
// integers, floats, booleans and (nested, possibly multi-line) arrays, and
// # comments. Errors: config_error with the offending line.
nlohmann::json parse_toml(const std::string& text);

// Inverse of parse_toml for trees built from those value types; keys are
// written in sorted order so equal trees give equal text.
std::string to_toml(const nlohmann::json& doc);

enum class Precision { f32, f64 };

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  Precision precision = Precision::f32;
  std::string catalog_name = "synth";  // synth | clinical
  patchset::LandmarkCatalog catalog;

  synth::SynthParams synth;
  std::size_t n_cases = 300;
  std::size_t observers = 10;       // simulated annotators per scattergram case
  std::size_t observer_cases = 10;  // cases pooled into each landmark's scattergram

  SamplingConfig sampling;
  nets::ModelArch pc_arch;
  nets::ModelArch pe_arch;
  nets::TrainConfig pc_train;
  nets::TrainConfig pe_train;
  pipeline::ScanConfig scan;

  std::size_t folds = 9;
  double alpha = 0.01;
  std::string report_format = "text";

  // Desk-scale defaults for the synthetic six-landmark catalog.
  static RunConfig defaults();

  CrossValConfig crossval() const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Unknown keys and ill-typed values are config_error.
RunConfig from_json(const nlohmann::json& doc);

// Defaults, then the config file (if any), then `key.path=value` overrides,
// each parsed as a TOML value (bare words are taken as strings).
RunConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides);

// Resolved config as TOML, the form stored next to every output.
std::string config_text(const RunConfig& cfg);

}  // namespace cephlm::cli
