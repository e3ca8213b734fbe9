#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cephlm/patchset/annotation.hpp"
#include "cephlm/patchset/catalog.hpp"

namespace cephlm::synth {

using patchset::Point;

// One landmark of the synthetic catalog with its simulated observer spread (px).
struct SynthLandmark {
  std::string name;
  patchset::Tissue tissue = patchset::Tissue::hard;
  double observer_sigma_x = 2.0;
  double observer_sigma_y = 2.0;
  double observer_rho = 0.0;
};

// S, N, Me, U1 on high-contrast structures; Prn, Ls on the faint profile.
const std::vector<SynthLandmark>& synth_landmarks();

// Catalog over synth_landmarks() with the given crop range for every entry.
patchset::LandmarkCatalog synth_catalog(double scale_min = 80.0, double scale_max = 144.0,
                                        std::size_t patches_per_image = 10);

struct SynthParams {
  std::size_t width = 512;
  std::size_t height = 512;
  double pixel_spacing_mm = 0.1;
  double variation_px = 10.0;  // control-point jitter amplitude
  double noise_std = 6.0;      // intensity levels, before blur
  double blur_sigma = 1.0;
  bool decoy = true;           // extra soft-style bump above Prn

  void validate() const;
};

struct ProfileBump {
  double yc = 0.0;
  double amplitude = 0.0;
  double spread = 0.0;
};

// Everything needed to redraw the scene and re-derive each landmark.
struct SynthShapes {
  Point sella_center;
  double sella_radius = 0.0;
  Point cranial[3];  // polyline; the middle vertex is N
  Point jaw_vertex;  // y = vy - a (x - vx)^2
  double jaw_a = 0.0;
  double jaw_x_left = 0.0, jaw_x_right = 0.0;
  Point tooth_base;  // centre of the root end
  double tooth_angle_deg = 0.0;  // lean from vertical, positive towards -x
  double tooth_length = 0.0;
  double tooth_width = 0.0;
  double profile_x0 = 0.0;     // base curve x = profile_x0 + profile_slope * y
  double profile_slope = 0.0;
  ProfileBump prn, ls;
  std::vector<ProfileBump> decoys;

  double profile_x(double y) const;
};

struct SynthCase {
  patchset::Case data;
  SynthShapes shapes;
};

// Pure function of (seed, params); case_id only names the result.
SynthCase generate_case(std::uint64_t seed, const SynthParams& params, const std::string& case_id);

// n draws from N(truth, [[sx^2, rho sx sy], [rho sx sy, sy^2]]).
// Errors: invalid_argument for n < 3, negative sigma or |rho| >= 1.
std::vector<Point> generate_observer_scatter(Point truth, double sigma_x, double sigma_y, double rho, std::size_t n,
                                             std::uint64_t seed);

}  // namespace cephlm::synth
