#include "cephlm/patchset/geometry.hpp"

#include "cephlm/error.hpp"

namespace cephlm::patchset {

Affine2 Affine2::inverse() const {
  const double det = a * d - b * c;
  if (det == 0.0) throw Error(Errc::invalid_argument, "affine map is singular");
  Affine2 inv;
  inv.a = d / det;
  inv.b = -b / det;
  inv.c = -c / det;
  inv.d = a / det;
  inv.tx = -(inv.a * tx + inv.b * ty);
  inv.ty = -(inv.c * tx + inv.d * ty);
  return inv;
}

Affine2 Affine2::after(const Affine2& first) const {
  Affine2 out;
  out.a = a * first.a + b * first.c;
  out.b = a * first.b + b * first.d;
  out.c = c * first.a + d * first.c;
  out.d = c * first.b + d * first.d;
  out.tx = a * first.tx + b * first.ty + tx;
  out.ty = c * first.tx + d * first.ty + ty;
  return out;
}

Affine2 image_to_patch(const Rect& rect) {
  if (!(rect.w > 0.0) || !(rect.h > 0.0)) throw Error(Errc::degenerate_rect, "rect width and height must be > 0");
  Affine2 m;
  m.a = 1.0 / rect.w;
  m.d = 1.0 / rect.h;
  m.tx = -rect.x0 / rect.w;
  m.ty = -rect.y0 / rect.h;
  return m;
}

Affine2 patch_to_image(const Rect& rect) {
  if (!(rect.w > 0.0) || !(rect.h > 0.0)) throw Error(Errc::degenerate_rect, "rect width and height must be > 0");
  Affine2 m;
  m.a = rect.w;
  m.d = rect.h;
  m.tx = rect.x0;
  m.ty = rect.y0;
  return m;
}

}  // namespace cephlm::patchset
