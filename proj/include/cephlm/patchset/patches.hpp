#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cephlm/patchset/annotation.hpp"
#include "cephlm/patchset/geometry.hpp"
#include "cephlm/rng.hpp"

namespace cephlm::patchset {

inline constexpr std::size_t kPatchSize = 64;
inline constexpr std::size_t kPatchPixels = kPatchSize * kPatchSize;
// Landmarks are kept this many resized pixels away from every patch border.
inline constexpr double kBorderMarginPx = 8.0;
inline constexpr double kMarginUv = kBorderMarginPx / static_cast<double>(kPatchSize);

using PatchPixels = std::array<std::uint8_t, kPatchPixels>;

struct PatchSample {
  PatchPixels pixels{};
  std::string label;                             // landmark name or BACKGROUND
  std::optional<std::array<float, 2>> point_uv;  // absent for BACKGROUND
  std::array<float, 4> source_rect{};            // x0, y0, w, h in cephalogram px
  std::string case_id;

  bool is_background() const { return label == kBackground; }
  Rect rect() const { return {source_rect[0], source_rect[1], source_rect[2], source_rect[3]}; }
};

struct ExtractedPatch {
  PatchPixels pixels{};
  Affine2 to_patch;  // image px -> (u, v)
  Affine2 to_image;  // (u, v) -> image px
};

// Bilinear resample of rect to 64x64; area outside the image reads as 0.
// Patch pixel (i, j) samples the image at u = (i + 0.5) / 64.
ExtractedPatch extract_patch(const Cephalogram& ceph, const Rect& rect);

// Float variant in [0,1] written straight into dst (64*64 values).
void extract_patch_normalized(const Cephalogram& ceph, const Rect& rect, float* dst);

// Labeled sample for one chosen rect; point_uv is computed against the
// float-rounded rect that is stored with the sample.
PatchSample make_landmark_sample(const Cephalogram& ceph, const std::string& case_id, const std::string& landmark,
                                 Point position, const Rect& rect);

struct SamplingWarning {
  std::string case_id;
  std::string landmark;
  std::string message;
};

struct SamplingResult {
  std::vector<PatchSample> samples;
  std::vector<SamplingWarning> warnings;
};

// spec.patches_per_image crops around one landmark. Sizes are uniform in
// [scale_min, scale_max] per axis; the offset is uniform subject to the
// landmark lying >= 8 resized px from every border and the rect lying inside
// the image.
SamplingResult sample_landmark_patches(const Cephalogram& ceph, const AnnotationSet& ann, const LandmarkSpec& spec,
                                       Rng& rng);

struct BackgroundSpec {
  double scale_min = 80.0;
  double scale_max = 320.0;
  double min_dist_px = 20.0;
  std::size_t max_attempts_per_patch = 200;
};

// True when some landmark lies within min_dist_px of the rect's landmark
// region (the part at least 8 resized px from every border).
bool rect_near_landmark(const Rect& rect, const AnnotationSet& ann, double min_dist_px);

SamplingResult sample_background_patches(const Cephalogram& ceph, const AnnotationSet& ann, std::size_t n,
                                         const BackgroundSpec& spec, Rng& rng);

struct AugmentConfig {
  double max_rotation_deg = 10.0;
  double gamma_min = 0.6;
  double gamma_max = 1.4;
};

struct AugmentDraw {
  double rotation_deg = 0.0;
  double gamma = 1.0;
};

AugmentDraw draw_augmentation(Rng& rng, const AugmentConfig& cfg);

// Rotation about the patch center (bilinear, zero fill) and gamma correction
// on [0,1] intensities; point_uv is rotated with the pixels.
PatchSample apply_augmentation(const PatchSample& patch, const AugmentDraw& draw);

PatchSample augment(const PatchSample& patch, Rng& rng, const AugmentConfig& cfg);

// (u, v) rotated by deg about (0.5, 0.5) in image orientation (y down).
std::array<double, 2> rotate_uv(double u, double v, double deg);

}  // namespace cephlm::patchset
