#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cephlm/error.hpp"
#include "cephlm/synth/synthceph.hpp"

using namespace cephlm;
using namespace cephlm::synth;
using patchset::Tissue;

namespace {

double mean_sobel(const patchset::GrayImage& img, Point c, int half) {
  double total = 0.0;
  int n = 0;
  const int cx = static_cast<int>(std::lround(c.x)), cy = static_cast<int>(std::lround(c.y));
  auto at = [&](int x, int y) { return static_cast<double>(img.at(x, y)); };
  for (int y = cy - half; y <= cy + half; ++y)
    for (int x = cx - half; x <= cx + half; ++x) {
      const double gx = at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1) - at(x - 1, y - 1) - 2 * at(x - 1, y) -
                        at(x - 1, y + 1);
      const double gy = at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1) - at(x - 1, y - 1) - 2 * at(x, y - 1) -
                        at(x + 1, y - 1);
      total += std::hypot(gx, gy);
      ++n;
    }
  return total / n;
}

}  // namespace

TEST_CASE("same seed gives a bit-identical case") {
  const SynthParams p;
  const auto a = generate_case(17, p, "x");
  const auto b = generate_case(17, p, "x");
  const auto c = generate_case(18, p, "x");
  CHECK(a.data.ceph.image.pixels == b.data.ceph.image.pixels);
  for (const auto& [name, pt] : a.data.annotations.points) {
    CHECK(pt.position.x == b.data.annotations.points.at(name).position.x);
    CHECK(pt.position.y == b.data.annotations.points.at(name).position.y);
  }
  CHECK(a.data.ceph.image.pixels != c.data.ceph.image.pixels);
  CHECK(a.data.ceph.width() == 512);
  CHECK(a.data.ceph.pixel_spacing_mm == 0.1);
  CHECK(a.data.annotations.points.size() == 6);
}

TEST_CASE("zero variation makes cases identical up to noise") {
  SynthParams p;
  p.variation_px = 0.0;
  SynthParams clean = p;
  clean.noise_std = 0.0;
  const auto a = generate_case(1, clean, "a");
  const auto b = generate_case(2, clean, "b");
  CHECK(a.data.ceph.image.pixels == b.data.ceph.image.pixels);
  for (const auto& [name, pt] : a.data.annotations.points) {
    CHECK(pt.position.x == b.data.annotations.points.at(name).position.x);
    CHECK(pt.position.y == b.data.annotations.points.at(name).position.y);
  }
  const auto na = generate_case(1, p, "a");
  const auto nb = generate_case(2, p, "b");
  CHECK(na.data.ceph.image.pixels != nb.data.ceph.image.pixels);
}

TEST_CASE("landmarks re-derive from the shape parameters") {
  const SynthParams p;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto sc = generate_case(seed, p, "c");
    const auto& sh = sc.shapes;
    const auto& pts = sc.data.annotations.points;

    // Me: lowest point of the sampled jaw curve.
    Point best{0, -1e9};
    for (double x = sh.jaw_x_left; x <= sh.jaw_x_right; x += 0.005) {
      const double y = sh.jaw_vertex.y - sh.jaw_a * (x - sh.jaw_vertex.x) * (x - sh.jaw_vertex.x);
      if (y > best.y) best = {x, y};
    }
    CHECK(std::hypot(best.x - pts.at("Me").position.x, best.y - pts.at("Me").position.y) < 0.1);

    // U1: far end of the tooth axis.
    const double a = sh.tooth_angle_deg * std::numbers::pi / 180.0;
    const Point tip{sh.tooth_base.x - std::sin(a) * sh.tooth_length, sh.tooth_base.y + std::cos(a) * sh.tooth_length};
    CHECK(std::hypot(tip.x - pts.at("U1").position.x, tip.y - pts.at("U1").position.y) < 0.1);

    // N: the corner of the cranial polyline, where the direction turns.
    const double turn = std::atan2(sh.cranial[2].y - sh.cranial[1].y, sh.cranial[2].x - sh.cranial[1].x) -
                        std::atan2(sh.cranial[1].y - sh.cranial[0].y, sh.cranial[1].x - sh.cranial[0].x);
    CHECK(std::abs(turn) > 0.3);
    CHECK(std::hypot(sh.cranial[1].x - pts.at("N").position.x, sh.cranial[1].y - pts.at("N").position.y) < 0.1);

    // Soft points: the profile curve evaluated term by term at the bump centre.
    auto profile = [&](double y) {
      double x = sh.profile_x0 + sh.profile_slope * y;
      std::vector<ProfileBump> bumps{sh.prn, sh.ls};
      bumps.insert(bumps.end(), sh.decoys.begin(), sh.decoys.end());
      for (const auto& b : bumps) x += b.amplitude * std::exp(-(y - b.yc) * (y - b.yc) / (2 * b.spread * b.spread));
      return x;
    };
    CHECK(std::abs(profile(sh.prn.yc) - pts.at("Prn").position.x) < 0.1);
    CHECK(std::abs(sh.prn.yc - pts.at("Prn").position.y) < 0.1);
    CHECK(std::abs(profile(sh.ls.yc) - pts.at("Ls").position.x) < 0.1);
    CHECK(std::hypot(sh.sella_center.x - pts.at("S").position.x, sh.sella_center.y - pts.at("S").position.y) < 0.1);
  }
}

TEST_CASE("every landmark keeps a 40 px margin, even at the largest variation") {
  SynthParams p;
  p.variation_px = 12.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto sc = generate_case(seed, p, "m");
    for (const auto& [name, pt] : sc.data.annotations.points) {
      CHECK(pt.position.x >= 40.0);
      CHECK(pt.position.y >= 40.0);
      CHECK(pt.position.x <= 512.0 - 1.0 - 40.0);
      CHECK(pt.position.y <= 512.0 - 1.0 - 40.0);
    }
  }
}

TEST_CASE("hard-style landmarks have at least twice the local gradient of soft-style ones") {
  const SynthParams p;
  double hard = 0.0, soft = 0.0;
  int nh = 0, ns = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sc = generate_case(seed, p, "g");
    for (const auto& [name, pt] : sc.data.annotations.points) {
      const double g = mean_sobel(sc.data.ceph.image, pt.position, 15);
      if (pt.tissue == Tissue::hard) {
        hard += g;
        ++nh;
      } else {
        soft += g;
        ++ns;
      }
    }
  }
  MESSAGE("hard/soft gradient ratio " << (hard / nh) / (soft / ns));
  CHECK(hard / nh >= 2.0 * (soft / ns));
}

TEST_CASE("observer scatter: degenerate limit, errors and moments") {
  const auto same = generate_observer_scatter({10, 20}, 0.0, 0.0, 0.0, 10, 1);
  for (const auto& p : same) {
    CHECK(p.x == 10.0);
    CHECK(p.y == 20.0);
  }
  CHECK_THROWS_AS(generate_observer_scatter({0, 0}, 1, 1, 0, 2, 1), Error);
  CHECK_THROWS_AS(generate_observer_scatter({0, 0}, -1, 1, 0, 5, 1), Error);
  CHECK_THROWS_AS(generate_observer_scatter({0, 0}, 1, 1, 1.0, 5, 1), Error);

  const auto s = generate_observer_scatter({5, -3}, 2.0, 0.5, 0.9, 10000, 4);
  double mx = 0, my = 0;
  for (const auto& p : s) {
    mx += p.x;
    my += p.y;
  }
  mx /= s.size();
  my /= s.size();
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : s) {
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  const double n1 = static_cast<double>(s.size() - 1);
  CHECK(std::sqrt(sxx / n1) == doctest::Approx(2.0).epsilon(0.03));
  CHECK(std::sqrt(syy / n1) == doctest::Approx(0.5).epsilon(0.03));
  CHECK(sxy / std::sqrt(sxx * syy) > 0.8);
}
