#include "cephlm/patchset/patches.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cephlm/error.hpp"

namespace cephlm::patchset {

namespace {

template <typename Sink>
void resample(const Cephalogram& ceph, const Rect& rect, Sink&& sink) {
  if (!(rect.w > 0.0) || !(rect.h > 0.0)) {
    throw Error(Errc::degenerate_rect, "rect width and height must be > 0");
  }
  const double sx = rect.w / static_cast<double>(kPatchSize);
  const double sy = rect.h / static_cast<double>(kPatchSize);
  for (std::size_t j = 0; j < kPatchSize; ++j) {
    const double y = rect.y0 + (static_cast<double>(j) + 0.5) * sy;
    for (std::size_t i = 0; i < kPatchSize; ++i) {
      const double x = rect.x0 + (static_cast<double>(i) + 0.5) * sx;
      sink(j * kPatchSize + i, sample_bilinear(ceph.image, x, y));
    }
  }
}

// Round half up; equal to lround on the clamped range and much cheaper.
std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5); }

// Feasible range for the normalized landmark offset along one axis.
struct Interval {
  double lo, hi;
  bool empty() const { return lo > hi; }
};

Interval offset_range(double landmark, double size, double extent) {
  // x0 = landmark - u*size must satisfy 0 <= x0 and x0 + size <= extent - 1.
  Interval r{kMarginUv, 1.0 - kMarginUv};
  r.lo = std::max(r.lo, (landmark - (extent - 1.0 - size)) / size);
  r.hi = std::min(r.hi, landmark / size);
  return r;
}

std::array<float, 4> to_float_rect(const Rect& r) {
  return {static_cast<float>(r.x0), static_cast<float>(r.y0), static_cast<float>(r.w), static_cast<float>(r.h)};
}

}  // namespace

ExtractedPatch extract_patch(const Cephalogram& ceph, const Rect& rect) {
  ExtractedPatch out;
  resample(ceph, rect, [&](std::size_t idx, double v) { out.pixels[idx] = to_u8(v); });
  out.to_patch = image_to_patch(rect);
  out.to_image = patch_to_image(rect);
  return out;
}

void extract_patch_normalized(const Cephalogram& ceph, const Rect& rect, float* dst) {
  // Rounded through 8 bits so inference sees exactly what training saw.
  resample(ceph, rect, [&](std::size_t idx, double v) { dst[idx] = static_cast<float>(to_u8(v)) / 255.0f; });
}

PatchSample make_landmark_sample(const Cephalogram& ceph, const std::string& case_id, const std::string& landmark,
                                 Point position, const Rect& rect) {
  PatchSample s;
  s.label = landmark;
  s.case_id = case_id;
  s.source_rect = to_float_rect(rect);
  const Rect stored = s.rect();
  s.pixels = extract_patch(ceph, stored).pixels;
  s.point_uv = std::array<float, 2>{static_cast<float>((position.x - stored.x0) / stored.w),
                                    static_cast<float>((position.y - stored.y0) / stored.h)};
  return s;
}

SamplingResult sample_landmark_patches(const Cephalogram& ceph, const AnnotationSet& ann, const LandmarkSpec& spec,
                                       Rng& rng) {
  SamplingResult result;
  auto it = ann.points.find(spec.name);
  if (it == ann.points.end()) {
    throw Error(Errc::unknown_landmark, "landmark '" + spec.name + "' is not annotated in case " + ann.case_id);
  }
  const Point lm = it->second.position;
  const double width = static_cast<double>(ceph.width());
  const double height = static_cast<double>(ceph.height());

  constexpr int kAttempts = 64;
  for (std::size_t n = 0; n < spec.patches_per_image; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      const double w = rng.uniform(spec.scale_min, spec.scale_max);
      const double h = rng.uniform(spec.scale_min, spec.scale_max);
      const Interval ur = offset_range(lm.x, w, width);
      const Interval vr = offset_range(lm.y, h, height);
      if (ur.empty() || vr.empty()) continue;
      const double u = rng.uniform(ur.lo, ur.hi);
      const double v = rng.uniform(vr.lo, vr.hi);
      result.samples.push_back(make_landmark_sample(ceph, ann.case_id, spec.name, lm, {lm.x - u * w, lm.y - v * h, w, h}));
      placed = true;
    }
    if (!placed) {
      result.warnings.push_back({ann.case_id, spec.name, "landmark too close to the image edge for a valid rect"});
      break;
    }
  }
  return result;
}

bool rect_near_landmark(const Rect& rect, const AnnotationSet& ann, double min_dist_px) {
  const double rx0 = rect.x0 + kMarginUv * rect.w;
  const double rx1 = rect.x0 + (1.0 - kMarginUv) * rect.w;
  const double ry0 = rect.y0 + kMarginUv * rect.h;
  const double ry1 = rect.y0 + (1.0 - kMarginUv) * rect.h;
  for (const auto& [name, p] : ann.points) {
    const double dx = std::max({rx0 - p.position.x, 0.0, p.position.x - rx1});
    const double dy = std::max({ry0 - p.position.y, 0.0, p.position.y - ry1});
    if (std::hypot(dx, dy) <= min_dist_px) return true;
  }
  return false;
}

SamplingResult sample_background_patches(const Cephalogram& ceph, const AnnotationSet& ann, std::size_t n,
                                         const BackgroundSpec& spec, Rng& rng) {
  SamplingResult result;
  const double width = static_cast<double>(ceph.width());
  const double height = static_cast<double>(ceph.height());
  std::size_t attempts = 0;
  const std::size_t budget = n * spec.max_attempts_per_patch;
  while (result.samples.size() < n && attempts < budget) {
    ++attempts;
    const double w = std::min(rng.uniform(spec.scale_min, spec.scale_max), width - 1.0);
    const double h = std::min(rng.uniform(spec.scale_min, spec.scale_max), height - 1.0);
    const double x0 = rng.uniform(0.0, std::max(0.0, width - 1.0 - w));
    const double y0 = rng.uniform(0.0, std::max(0.0, height - 1.0 - h));
    PatchSample s;
    s.source_rect = to_float_rect(Rect{x0, y0, w, h});
    const Rect rect = s.rect();
    if (rect_near_landmark(rect, ann, spec.min_dist_px)) continue;
    s.label = std::string(kBackground);
    s.case_id = ann.case_id;
    s.pixels = extract_patch(ceph, rect).pixels;
    result.samples.push_back(std::move(s));
  }
  if (result.samples.size() < n) {
    result.warnings.push_back({ann.case_id, std::string(kBackground),
                               "only " + std::to_string(result.samples.size()) + " of " + std::to_string(n) +
                                   " background patches found"});
  }
  return result;
}

AugmentDraw draw_augmentation(Rng& rng, const AugmentConfig& cfg) {
  AugmentDraw d;
  d.rotation_deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  d.gamma = rng.uniform(cfg.gamma_min, cfg.gamma_max);
  return d;
}

std::array<double, 2> rotate_uv(double u, double v, double deg) {
  const double t = deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double du = u - 0.5, dv = v - 0.5;
  return {0.5 + c * du - s * dv, 0.5 + s * du + c * dv};
}

PatchSample apply_augmentation(const PatchSample& patch, const AugmentDraw& draw) {
  PatchSample out = patch;

  std::array<double, 256> lut;
  for (int i = 0; i < 256; ++i) lut[static_cast<std::size_t>(i)] = 255.0 * std::pow(i / 255.0, draw.gamma);

  if (draw.rotation_deg == 0.0) {
    for (std::size_t i = 0; i < kPatchPixels; ++i) out.pixels[i] = to_u8(lut[patch.pixels[i]]);
    return out;
  }

  // Output pixel q samples the source at R^-1 (q - c) + c, pixel centers at k + 0.5.
  const double t = draw.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double center = static_cast<double>(kPatchSize) / 2.0;
  const long n = static_cast<long>(kPatchSize);
  auto src = [&](long x, long y) -> double {
    if (x < 0 || y < 0 || x >= n || y >= n) return 0.0;
    return lut[patch.pixels[static_cast<std::size_t>(y * n + x)]];
  };
  for (std::size_t j = 0; j < kPatchSize; ++j) {
    const double qy = static_cast<double>(j) + 0.5 - center;
    // Walk the row incrementally: each step adds (c, -s) to the source point.
    double px = c * (0.5 - center) + s * qy + center - 0.5;
    double py = -s * (0.5 - center) + c * qy + center - 0.5;
    for (std::size_t i = 0; i < kPatchSize; ++i, px += c, py -= s) {
      const double fx = std::floor(px), fy = std::floor(py);
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double ax = px - fx, ay = py - fy;
      double v;
      if (x0 >= 0 && y0 >= 0 && x0 + 1 < n && y0 + 1 < n) {
        const std::uint8_t* p = patch.pixels.data() + y0 * n + x0;
        const double top = (1.0 - ax) * lut[p[0]] + ax * lut[p[1]];
        const double bottom = (1.0 - ax) * lut[p[n]] + ax * lut[p[n + 1]];
        v = (1.0 - ay) * top + ay * bottom;
      } else {
        const double top = (1.0 - ax) * src(x0, y0) + ax * src(x0 + 1, y0);
        const double bottom = (1.0 - ax) * src(x0, y0 + 1) + ax * src(x0 + 1, y0 + 1);
        v = (1.0 - ay) * top + ay * bottom;
      }
      out.pixels[j * kPatchSize + i] = to_u8(v);
    }
  }
  if (patch.point_uv) {
    const auto r = rotate_uv((*patch.point_uv)[0], (*patch.point_uv)[1], draw.rotation_deg);
    out.point_uv = std::array<float, 2>{static_cast<float>(r[0]), static_cast<float>(r[1])};
  }
  return out;
}

PatchSample augment(const PatchSample& patch, Rng& rng, const AugmentConfig& cfg) {
  return apply_augmentation(patch, draw_augmentation(rng, cfg));
}

}  // namespace cephlm::patchset
