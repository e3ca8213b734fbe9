#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cephlm/nets/model.hpp"
#include "cephlm/patchset/annotation.hpp"
#include "cephlm/patchset/catalog.hpp"

namespace cephlm::pipeline {

using patchset::Point;
using patchset::Rect;

enum class Aggregation { mean, median };
Aggregation parse_aggregation(std::string_view s);
std::string_view aggregation_name(Aggregation a);

struct ScanConfig {
  double grid_stride_px = 32.0;
  // (w, h) windows; empty means default_scale_set(catalog).
  std::vector<std::pair<double, double>> scale_set;
  double pc_confidence_threshold = 0.9;
  Aggregation aggregation = Aggregation::median;
  double outlier_k = 2.0;
  bool select_larger_cluster = false;  // act on bimodality instead of only flagging it
  bool soft_filter = true;
  double soft_filter_scales = 3.0;
  std::size_t batch_size = 256;  // fixed inference batches keep results independent of jobs
  std::size_t jobs = 1;

  void validate() const;
};

// Squares of 80, 128, 192, 256 and 320 px, then every landmark's aspect
// rects applied to the 192 px size.
std::vector<std::pair<double, double>> default_scale_set(const patchset::LandmarkCatalog& catalog);

// (i*stride, j*stride) with both coordinates strictly inside the image,
// x-major order. Errors: invalid_argument for stride < 1.
std::vector<Point> generate_grid(std::size_t width, std::size_t height, double stride);

// Window of size (w, h) centred on p, shifted to lie inside the image when it fits.
Rect window_at(Point p, double w, double h, std::size_t width, std::size_t height);

struct Candidate {
  Rect rect;
  double confidence = 0.0;
  std::size_t grid_index = 0;
  std::size_t scale_index = 0;
};

struct CandidateSet {
  std::string landmark;
  std::vector<Candidate> candidates;
};

// PC weights with the class names of its head.
template <typename T>
struct PcModel {
  nets::Model<T> model;
  std::vector<std::string> labels;
};

template <typename T>
struct PeModel {
  nets::Model<T> model;
  std::string landmark;
};

// Every grid point x scale window is classified; kept iff the argmax is not
// BACKGROUND and its probability >= threshold. Sets exist for every non
// background label, possibly empty, in grid-then-scale order.
template <typename T>
std::map<std::string, CandidateSet> collect_candidates(const patchset::Cephalogram& ceph, const PcModel<T>& pc,
                                                       const ScanConfig& cfg,
                                                       const std::vector<std::pair<double, double>>& scales);

// x = x0 + u w, y = y0 + v h with (u, v) clamped to the downstream range.
// Errors: model_mismatch when the PE model is for another landmark.
template <typename T>
std::vector<Point> estimate_scatter(const patchset::Cephalogram& ceph, const CandidateSet& candidates,
                                    const PeModel<T>& pe, const ScanConfig& cfg);

// Componentwise mean or median. Errors: empty_input.
Point aggregate(std::span<const Point> points, Aggregation mode);

struct OutlierSplit {
  std::vector<Point> kept;
  std::vector<Point> removed;
  Point center;
  double sigma = 0.0;
};

// Single pass: distances d_i to the aggregate centre; sigma is their RMS
// (the radial standard deviation about the centre); drop d_i > k sigma.
OutlierSplit reject_outliers(std::span<const Point> points, double k, Aggregation mode = Aggregation::median);

struct Bimodality {
  bool flag = false;
  Point centers[2];
  std::vector<std::size_t> assignment;  // cluster of each input point
};

// Two-means with 20 Lloyd iterations from a seeded start; flagged iff the
// centres are more than 3x the mean intra-cluster RMS spread apart.
Bimodality detect_bimodality(std::span<const Point> points, std::uint64_t seed = 0);

// Median offset (soft - anchor) over training cases and a robust scale
// 1.4826 * median |offset - median offset|, floored at 1 px.
struct OffsetStat {
  Point median;
  double scale = 1.0;
  std::size_t count = 0;
};

struct ReferenceOffsets {
  // soft landmark -> hard anchor -> stat
  std::map<std::string, std::map<std::string, OffsetStat>> table;
  bool empty() const { return table.empty(); }
};

ReferenceOffsets build_reference_offsets(std::span<const patchset::AnnotationSet> training,
                                         const patchset::LandmarkCatalog& catalog);

// Median over available anchors of |(p - anchor) - median offset| / s, where
// s = hypot(scale, spread) adds the candidate scatter's own spread. Empty
// when no anchor is available.
std::optional<double> offset_deviation(Point p, const std::map<std::string, OffsetStat>& stats,
                                       const std::map<std::string, Point>& anchors, double spread = 0.0);

struct LandmarkEstimate {
  std::string landmark;
  patchset::Tissue tissue = patchset::Tissue::hard;
  bool missing = false;
  Point point;
  std::size_t n_candidates = 0;
  std::size_t n_outliers_removed = 0;
  Point dispersion;  // per-axis std of the kept points
  bool bimodal = false;
  bool clamped = false;
  // Soft-tissue filter bookkeeping.
  bool filter_applied = false;
  bool filter_fallback = false;
  std::size_t n_filtered = 0;
  bool missing_unfiltered = false;
  Point point_unfiltered;
};

struct IdentifyResult {
  std::string case_id;
  std::vector<LandmarkEstimate> estimates;  // catalog order
  std::map<std::string, double> timing_ms;
  std::vector<std::string> warnings;

  const LandmarkEstimate* find(std::string_view name) const;
};

template <typename T>
struct ModelSet {
  PcModel<T> pc;
  std::map<std::string, PeModel<T>> pe;
};

// grid -> candidates -> scatter -> outliers -> aggregate -> soft-tissue filter.
// Landmarks without candidates are reported missing; points are clamped into the image.
template <typename T>
IdentifyResult identify_landmarks(const patchset::Cephalogram& ceph, const ModelSet<T>& models,
                                  const patchset::LandmarkCatalog& catalog, const ScanConfig& cfg,
                                  const ReferenceOffsets* offsets = nullptr);

// Post-aggregation soft-tissue pass over already computed scatters. Points with
// offset_deviation > soft_filter_scales are dropped; the aggregate is re-taken
// over the remaining points of the original outlier-pass support. An emptied
// support is summarized again from the filtered scatter, an emptied scatter
// keeps the unfiltered estimate.
void relative_position_filter(IdentifyResult& result, const std::map<std::string, std::vector<Point>>& scatters,
                              const ReferenceOffsets* offsets, const ScanConfig& cfg);

std::string estimates_to_json(const IdentifyResult& result, bool include_timing = true);

// Grayscale copy with a cross per estimate (white) and per truth point (black).
void write_overlay(const patchset::Cephalogram& ceph, const IdentifyResult& result,
                   const patchset::AnnotationSet* truth, const std::filesystem::path& path);

}  // namespace cephlm::pipeline
