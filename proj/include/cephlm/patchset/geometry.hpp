#pragma once

#include <cmath>

namespace cephlm::patchset {

// Continuous pixel coordinates: pixel (c, r) has its center at (c, r).
struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double w = 0.0;
  double h = 0.0;

  Point center() const { return {x0 + 0.5 * w, y0 + 0.5 * h}; }
};

// x' = a*x + b*y + tx,  y' = c*x + d*y + ty
struct Affine2 {
  double a = 1.0, b = 0.0, tx = 0.0;
  double c = 0.0, d = 1.0, ty = 0.0;

  Point apply(Point p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
  Affine2 inverse() const;
  // (*this) after `first`: p -> this(first(p)).
  Affine2 after(const Affine2& first) const;

  static Affine2 identity() { return {}; }
};

// Image px -> normalized patch coordinates (u, v) in [0,1]^2 over the rect.
Affine2 image_to_patch(const Rect& rect);
Affine2 patch_to_image(const Rect& rect);

}  // namespace cephlm::patchset
