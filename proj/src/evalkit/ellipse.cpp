#include "cephlm/evalkit/ellipse.hpp"

#include <cmath>
#include <numbers>

#include "cephlm/error.hpp"
#include "cephlm/rng.hpp"

namespace cephlm::evalkit {

std::string_view unit_name(Unit u) { return u == Unit::px ? "px" : "mm"; }

double euclidean_error_mm(Point estimate, Point truth, double spacing_mm) {
  if (!(spacing_mm > 0.0)) throw Error(Errc::invalid_argument, "pixel spacing must be > 0");
  return std::hypot(estimate.x - truth.x, estimate.y - truth.y) * spacing_mm;
}

ConfidenceEllipse ConfidenceEllipse::centered_at(Point c) const {
  ConfidenceEllipse e = *this;
  e.center = c;
  return e;
}

ConfidenceEllipse ConfidenceEllipse::scaled(double factor, Unit to) const {
  ConfidenceEllipse e = *this;
  e.center = {center.x * factor, center.y * factor};
  e.sigma_x *= factor;
  e.sigma_y *= factor;
  e.unit = to;
  return e;
}

ConfidenceEllipse fit_confidence_ellipse(std::span<const Point> scatter) {
  if (scatter.size() < 3) throw Error(Errc::degenerate_scatter, "need at least 3 points to fit an ellipse");
  const double n = static_cast<double>(scatter.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : scatter) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& p : scatter) {
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(Errc::degenerate_scatter, "scatter has zero variance on an axis");
  ConfidenceEllipse e;
  e.center = {mx, my};
  e.sigma_x = std::sqrt(sxx / (n - 1.0));
  e.sigma_y = std::sqrt(syy / (n - 1.0));
  e.rho = sxy / std::sqrt(sxx * syy);
  if (!(std::abs(e.rho) < 1.0 - 1e-12)) throw Error(Errc::degenerate_scatter, "scatter points are collinear");
  return e;
}

double mahalanobis_sq(const ConfidenceEllipse& e, Point p) {
  const double zx = (p.x - e.center.x) / e.sigma_x;
  const double zy = (p.y - e.center.y) / e.sigma_y;
  return (zx * zx - 2.0 * e.rho * zx * zy + zy * zy) / (1.0 - e.rho * e.rho);
}

double alpha_at(const ConfidenceEllipse& e, Point p) { return std::exp(-0.5 * mahalanobis_sq(e, p)); }

bool within_ellipse(const ConfidenceEllipse& e, Point p, double alpha_limit) {
  if (!(alpha_limit > 0.0 && alpha_limit < 1.0)) throw Error(Errc::invalid_argument, "alpha_limit must be in (0, 1)");
  return mahalanobis_sq(e, p) <= -2.0 * std::log(alpha_limit);
}

EllipseAxes ellipse_axes(const ConfidenceEllipse& e, double alpha_limit) {
  if (!(alpha_limit > 0.0 && alpha_limit < 1.0)) throw Error(Errc::invalid_argument, "alpha_limit must be in (0, 1)");
  const double a = e.sigma_x * e.sigma_x;
  const double d = e.sigma_y * e.sigma_y;
  const double b = e.rho * e.sigma_x * e.sigma_y;
  const double mid = 0.5 * (a + d);
  const double rad = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  const double l1 = mid + rad, l2 = std::max(mid - rad, 0.0);
  const double c = -2.0 * std::log(alpha_limit);
  EllipseAxes out;
  out.semimajor = std::sqrt(l1 * c);
  out.semiminor = std::sqrt(l2 * c);
  double ang = 0.5 * std::atan2(2.0 * b, a - d) * 180.0 / std::numbers::pi;
  if (ang <= -90.0) ang += 180.0;
  out.angle_deg = ang;
  return out;
}

ConfidenceEllipse ellipse_from_axes(Point center, const EllipseAxes& axes, double alpha_limit) {
  const double c = -2.0 * std::log(alpha_limit);
  const double l1 = axes.semimajor * axes.semimajor / c;
  const double l2 = axes.semiminor * axes.semiminor / c;
  const double t = axes.angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);
  const double a = l1 * ct * ct + l2 * st * st;
  const double d = l1 * st * st + l2 * ct * ct;
  const double b = (l1 - l2) * ct * st;
  ConfidenceEllipse e;
  e.center = center;
  e.sigma_x = std::sqrt(a);
  e.sigma_y = std::sqrt(d);
  e.rho = b / (e.sigma_x * e.sigma_y);
  return e;
}

std::vector<std::vector<std::string>> kfold_partition(std::vector<std::string> case_ids, std::size_t k,
                                                      std::uint64_t seed) {
  if (k < 2) throw Error(Errc::invalid_argument, "k-fold needs k >= 2");
  if (k > case_ids.size()) {
    throw Error(Errc::invalid_argument, "k = " + std::to_string(k) + " exceeds the " + std::to_string(case_ids.size()) +
                                            " available cases");
  }
  Rng rng = Rng::derive(seed, "kfold");
  rng.shuffle(case_ids);
  std::vector<std::vector<std::string>> folds(k);
  const std::size_t base = case_ids.size() / k, extra = case_ids.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t n = base + (f < extra ? 1 : 0);
    folds[f].assign(case_ids.begin() + static_cast<std::ptrdiff_t>(pos),
                    case_ids.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return folds;
}

}  // namespace cephlm::evalkit
