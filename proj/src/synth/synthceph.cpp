#include "cephlm/synth/synthceph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cephlm/error.hpp"
#include "cephlm/rng.hpp"

namespace cephlm::synth {

using patchset::Tissue;

const std::vector<SynthLandmark>& synth_landmarks() {
  // Observer spreads sized so the alpha=0.01 axes fall in the 1.5-3 mm range
  // typical of expert scattergrams at 0.1 mm/px.
  static const std::vector<SynthLandmark> kLandmarks = {
      {"S", Tissue::hard, 6.0, 4.5, 0.1},   {"N", Tissue::hard, 5.0, 7.0, 0.2},
      {"Me", Tissue::hard, 7.0, 4.5, -0.2}, {"U1", Tissue::hard, 4.5, 6.0, 0.3},
      {"Prn", Tissue::soft, 7.5, 6.0, 0.2}, {"Ls", Tissue::soft, 6.5, 5.5, -0.1},
  };
  return kLandmarks;
}

patchset::LandmarkCatalog synth_catalog(double scale_min, double scale_max, std::size_t patches_per_image) {
  std::vector<patchset::LandmarkSpec> specs;
  for (const auto& l : synth_landmarks()) {
    patchset::LandmarkSpec s;
    s.name = l.name;
    s.tissue = l.tissue;
    s.scale_min = scale_min;
    s.scale_max = scale_max;
    s.patches_per_image = patches_per_image;
    specs.push_back(std::move(s));
  }
  return patchset::LandmarkCatalog(std::move(specs));
}

void SynthParams::validate() const {
  if (width < 128 || height < 128) throw Error(Errc::config_error, "synthetic images must be at least 128x128");
  if (!(pixel_spacing_mm > 0.0)) throw Error(Errc::config_error, "pixel_spacing_mm must be > 0");
  if (variation_px < 0.0 || variation_px > 12.0) throw Error(Errc::config_error, "variation_px must be in [0, 12]");
  if (noise_std < 0.0 || blur_sigma < 0.0) throw Error(Errc::config_error, "noise_std and blur_sigma must be >= 0");
}

double SynthShapes::profile_x(double y) const {
  double x = profile_x0 + profile_slope * y;
  auto bump = [&](const ProfileBump& b) {
    const double t = (y - b.yc) / b.spread;
    return b.amplitude * std::exp(-0.5 * t * t);
  };
  x += bump(prn) + bump(ls);
  for (const auto& d : decoys) x += bump(d);
  return x;
}

namespace {

// Coverage layer in [0,1]; shapes are merged with max so overlaps stay flat.
struct Layer {
  std::size_t w, h;
  std::vector<float> cov;
  Layer(std::size_t w_, std::size_t h_) : w(w_), h(h_), cov(w_ * h_, 0.0f) {}

  template <typename F>
  void stamp(double x0, double y0, double x1, double y1, F&& coverage) {
    const long ix0 = std::max(0L, static_cast<long>(std::floor(x0)));
    const long iy0 = std::max(0L, static_cast<long>(std::floor(y0)));
    const long ix1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(x1)));
    const long iy1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(y1)));
    for (long y = iy0; y <= iy1; ++y)
      for (long x = ix0; x <= ix1; ++x) {
        const double c = std::clamp(coverage(static_cast<double>(x), static_cast<double>(y)), 0.0, 1.0);
        float& dst = cov[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
        dst = std::max(dst, static_cast<float>(c));
      }
  }

  void segment(Point a, Point b, double half_width) {
    const double pad = half_width + 1.0;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = std::max(dx * dx + dy * dy, 1e-12);
    stamp(std::min(a.x, b.x) - pad, std::min(a.y, b.y) - pad, std::max(a.x, b.x) + pad, std::max(a.y, b.y) + pad,
          [&](double x, double y) {
            const double t = std::clamp(((x - a.x) * dx + (y - a.y) * dy) / len2, 0.0, 1.0);
            const double d = std::hypot(x - (a.x + t * dx), y - (a.y + t * dy));
            return half_width + 0.5 - d;
          });
  }

  void polyline(const std::vector<Point>& pts, double half_width) {
    for (std::size_t i = 1; i < pts.size(); ++i) segment(pts[i - 1], pts[i], half_width);
  }

  void add_to(std::vector<double>& canvas, double intensity) const {
    for (std::size_t i = 0; i < cov.size(); ++i) canvas[i] += intensity * cov[i];
  }
};

void gaussian_blur(std::vector<double>& img, std::size_t w, std::size_t h, double sigma) {
  if (sigma <= 0.0) return;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;
  std::vector<double> tmp(img.size());
  const long W = static_cast<long>(w), H = static_cast<long>(h);
  // Clamp-to-edge borders.
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * img[y * W + std::clamp(x + i, 0L, W - 1)];
      tmp[y * W + x] = s;
    }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp[std::clamp(y + i, 0L, H - 1) * W + x];
      img[y * W + x] = s;
    }
}

}  // namespace

SynthCase generate_case(std::uint64_t seed, const SynthParams& params, const std::string& case_id) {
  params.validate();
  Rng shape_rng = Rng::derive(seed, "shape");
  Rng noise_rng = Rng::derive(seed, "noise");
  const double v = params.variation_px;
  const double sx = static_cast<double>(params.width) / 512.0;
  const double sy = static_cast<double>(params.height) / 512.0;
  auto jitter = [&](double x, double y) { return Point{x * sx + v * shape_rng.uniform(-1, 1), y * sy + v * shape_rng.uniform(-1, 1)}; };
  auto frac = [&] { return shape_rng.uniform(-1, 1) * v / 10.0; };  // +-1 at the default amplitude

  SynthShapes sh;
  sh.sella_center = jitter(130, 150);
  sh.sella_radius = 24.0 + 2.0 * frac();
  const Point n = jitter(310, 100);
  sh.cranial[0] = {n.x - 110.0 * sx + v * frac(), n.y - 55.0 * sy + v * frac()};
  sh.cranial[1] = n;
  sh.cranial[2] = {n.x + 25.0 * sx + v * frac(), n.y + 90.0 * sy + v * frac()};
  sh.jaw_vertex = jitter(200, 430);
  sh.jaw_a = (0.006 + 0.001 * frac()) / sy;
  sh.jaw_x_left = sh.jaw_vertex.x - 140.0 * sx;
  sh.jaw_x_right = sh.jaw_vertex.x + 110.0 * sx;
  const Point u1 = jitter(300, 300);
  sh.tooth_angle_deg = 20.0 + 6.0 * frac();
  sh.tooth_length = 70.0 * sy;
  sh.tooth_width = 16.0;
  const double ta = sh.tooth_angle_deg * std::numbers::pi / 180.0;
  sh.tooth_base = {u1.x + std::sin(ta) * sh.tooth_length, u1.y - std::cos(ta) * sh.tooth_length};
  sh.profile_x0 = 415.0 * sx + v * shape_rng.uniform(-1, 1);
  sh.profile_slope = 0.03 * frac();
  sh.prn = {220.0 * sy + v * shape_rng.uniform(-1, 1), 28.0 + 3.0 * frac(), 16.0 + 2.0 * frac()};
  sh.ls = {360.0 * sy + v * shape_rng.uniform(-1, 1), 18.0 + 2.0 * frac(), 12.0 + 1.5 * frac()};
  if (params.decoy) {
    // Shaped between the two soft bumps so only context tells it apart.
    const double t = std::clamp(0.5 + 0.5 * frac(), 0.0, 1.0);
    sh.decoys.push_back({110.0 * sy + 3.0 * v * shape_rng.uniform(-1, 1), sh.ls.amplitude + t * (sh.prn.amplitude - sh.ls.amplitude),
                         sh.ls.spread + t * (sh.prn.spread - sh.ls.spread)});
  }

  patchset::AnnotationSet ann;
  ann.case_id = case_id;
  ann.pixel_spacing_mm = params.pixel_spacing_mm;
  auto add = [&](const char* name, Point p, Tissue t) { ann.points[name] = {p, t}; };
  add("S", sh.sella_center, Tissue::hard);
  add("N", sh.cranial[1], Tissue::hard);
  add("Me", sh.jaw_vertex, Tissue::hard);
  add("U1", u1, Tissue::hard);
  add("Prn", {sh.profile_x(sh.prn.yc), sh.prn.yc}, Tissue::soft);
  add("Ls", {sh.profile_x(sh.ls.yc), sh.ls.yc}, Tissue::soft);

  const std::size_t W = params.width, H = params.height;
  std::vector<double> canvas(W * H);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) canvas[y * W + x] = 30.0 + 20.0 * static_cast<double>(y) / static_cast<double>(H);

  // Soft tissue: a faint fill left of the profile plus a faint line on it.
  {
    Layer fill(W, H), line(W, H);
    std::vector<Point> curve;
    for (double y = -2.0; y <= static_cast<double>(H) + 2.0; y += 0.5) curve.push_back({sh.profile_x(y), y});
    for (std::size_t y = 0; y < H; ++y) {
      const double edge = sh.profile_x(static_cast<double>(y));
      for (std::size_t x = 0; x < W; ++x) fill.cov[y * W + x] = static_cast<float>(std::clamp(edge - static_cast<double>(x) + 0.5, 0.0, 1.0));
    }
    line.polyline(curve, 1.5);
    fill.add_to(canvas, 18.0);
    line.add_to(canvas, 30.0);
  }

  {
    Layer sella(W, H);
    const Point c = sh.sella_center;
    const double R = sh.sella_radius;
    sella.stamp(c.x - R - 5, c.y - R - 5, c.x + R + 5, c.y + R + 5, [&](double x, double y) {
      const double ang = std::atan2(y - c.y, x - c.x) * 180.0 / std::numbers::pi;
      if (std::abs(ang + 90.0) < 45.0) return 0.0;  // open towards the top
      return 3.0 - std::abs(std::hypot(x - c.x, y - c.y) - R);
    });
    sella.add_to(canvas, 150.0);
  }
  {
    Layer cranial(W, H);
    cranial.polyline({sh.cranial[0], sh.cranial[1], sh.cranial[2]}, 3.0);
    cranial.add_to(canvas, 150.0);
  }
  {
    Layer jaw(W, H);
    std::vector<Point> pts;
    for (double x = sh.jaw_x_left; x <= sh.jaw_x_right; x += 1.0) {
      pts.push_back({x, sh.jaw_vertex.y - sh.jaw_a * (x - sh.jaw_vertex.x) * (x - sh.jaw_vertex.x)});
    }
    jaw.polyline(pts, 3.0);
    jaw.add_to(canvas, 140.0);
  }
  {
    Layer tooth(W, H);
    const Point b = sh.tooth_base;
    const double dx = u1.x - b.x, dy = u1.y - b.y;
    const double L = sh.tooth_length, hw = 0.5 * sh.tooth_width;
    const double ux = dx / L, uy = dy / L;
    tooth.stamp(std::min(b.x, u1.x) - hw - 2, std::min(b.y, u1.y) - hw - 2, std::max(b.x, u1.x) + hw + 2,
                std::max(b.y, u1.y) + hw + 2, [&](double x, double y) {
                  const double a = (x - b.x) * ux + (y - b.y) * uy;
                  const double across = -(x - b.x) * uy + (y - b.y) * ux;
                  return std::min({a + 0.5, L - a + 0.5, hw - std::abs(across) + 0.5});
                });
    tooth.add_to(canvas, 170.0);
  }

  for (auto& px : canvas) px += params.noise_std * noise_rng.normal();
  gaussian_blur(canvas, W, H, params.blur_sigma);

  SynthCase out;
  out.shapes = sh;
  out.data.annotations = std::move(ann);
  out.data.ceph.id = case_id;
  out.data.ceph.pixel_spacing_mm = params.pixel_spacing_mm;
  out.data.ceph.image = patchset::GrayImage(W, H);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    out.data.ceph.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(canvas[i]), 0L, 255L));
  }
  return out;
}

std::vector<Point> generate_observer_scatter(Point truth, double sigma_x, double sigma_y, double rho, std::size_t n,
                                             std::uint64_t seed) {
  if (n < 3) throw Error(Errc::invalid_argument, "observer scatter needs n >= 3");
  if (!(sigma_x >= 0.0) || !(sigma_y >= 0.0) || !(std::abs(rho) < 1.0)) {
    throw Error(Errc::invalid_argument, "observer scatter needs sigma >= 0 and |rho| < 1");
  }
  Rng rng(seed);
  std::vector<Point> out(n);
  const double rc = std::sqrt(1.0 - rho * rho);
  for (auto& p : out) {
    const double z1 = rng.normal(), z2 = rng.normal();
    p = {truth.x + sigma_x * z1, truth.y + sigma_y * (rho * z1 + rc * z2)};
  }
  return out;
}

}  // namespace cephlm::synth
