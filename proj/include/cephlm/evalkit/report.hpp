#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cephlm/evalkit/ellipse.hpp"
#include "cephlm/patchset/catalog.hpp"

namespace cephlm::evalkit {

struct LandmarkOutcome {
  std::string landmark;
  Point truth;
  bool missing = false;
  Point estimate;
  // Result before the soft-tissue relative-position filter.
  bool missing_unfiltered = false;
  Point estimate_unfiltered;
};

struct CaseOutcome {
  std::string case_id;
  std::size_t fold = 0;
  double spacing_mm = 0.1;
  std::vector<LandmarkOutcome> landmarks;
};

struct LandmarkInfo {
  std::string name;
  patchset::Tissue tissue = patchset::Tissue::hard;
  ConfidenceEllipse ellipse;  // observer dispersion in px; the centre is ignored
};

struct ReportInput {
  std::vector<LandmarkInfo> landmarks;
  std::vector<CaseOutcome> cases;
  double alpha_limit = 0.01;
  double pixel_spacing_mm = 0.1;  // converts ellipse axes to mm
  std::vector<std::vector<std::string>> folds;
  std::vector<double> fold_pc_val_acc;
};

struct LandmarkSuccess {
  std::string landmark;
  std::size_t cases = 0;
  std::size_t within = 0;
  std::size_t missing = 0;
  double pct = 0.0;
};

struct SuccessSummary {
  std::vector<LandmarkSuccess> rows;
  double mean_pct = 0.0;
};

// Share of cases whose estimate lies inside the landmark's ellipse centred on
// that case's truth. A missing estimate counts as a failure and is also
// tallied separately.
SuccessSummary success_rate(std::span<const CaseOutcome> cases, std::span<const LandmarkInfo> landmarks,
                            double alpha_limit = 0.01, bool filtered = true);

struct ReportRow {
  std::string landmark;
  patchset::Tissue tissue = patchset::Tissue::hard;
  std::size_t n_cases = 0;
  std::size_t n_missing = 0;
  double error_mean_mm = 0.0;
  double error_std_mm = 0.0;
  std::size_t n_missing_unfiltered = 0;
  double unfiltered_mean_mm = 0.0;
  double unfiltered_std_mm = 0.0;
  double angle_deg = 0.0;
  double semiminor_mm = 0.0;
  double semimajor_mm = 0.0;
  double reliability_pct = 0.0;
  double unfiltered_reliability_pct = 0.0;
};

struct ReportSummary {
  std::size_t n_cases = 0;
  double mean_error_mm = 0.0;
  double mean_error_px = 0.0;
  double hard_error_mm = 0.0;
  double soft_error_mm = 0.0;
  double soft_unfiltered_error_mm = 0.0;
  double mean_reliability_pct = 0.0;
  double hard_reliability_pct = 0.0;
  std::size_t n_missing = 0;
  double mean_pc_val_acc = 0.0;
};

// All values are rounded to 6 decimals so every rendering carries the same numbers.
struct EvaluationReport {
  double alpha_limit = 0.01;
  std::vector<ReportRow> rows;
  ReportSummary summary;
  std::vector<std::vector<std::string>> folds;
  std::vector<double> fold_pc_val_acc;
};

EvaluationReport build_report(const ReportInput& input);

enum class ReportFormat { csv, json, text };
ReportFormat parse_report_format(std::string_view s);

std::string render_report(const EvaluationReport& report, ReportFormat format);
// landmark, angle_deg, semiminor_mm, semimajor_mm, reliability_pct
std::string render_ellipse_csv(const EvaluationReport& report);

}  // namespace cephlm::evalkit
