#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cephlm/patchset/geometry.hpp"

namespace cephlm::evalkit {

using patchset::Point;

enum class Unit { px, mm };

std::string_view unit_name(Unit u);

double euclidean_error_mm(Point estimate, Point truth, double spacing_mm);

struct ConfidenceEllipse {
  Point center;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;  // Pearson correlation
  Unit unit = Unit::px;

  // Same shape re-centred, e.g. on one case's ground truth.
  ConfidenceEllipse centered_at(Point c) const;
  // Scales the dispersion, e.g. px -> mm with the pixel spacing.
  ConfidenceEllipse scaled(double factor, Unit to) const;
};

struct EllipseAxes {
  double angle_deg = 0.0;  // semimajor axis vs +x, in (-90, 90]
  double semiminor = 0.0;
  double semimajor = 0.0;
};

// Centre = mean, sigmas = sample std (n-1), rho = sample correlation.
// Errors: degenerate_scatter for < 3 points, zero variance or collinear points.
ConfidenceEllipse fit_confidence_ellipse(std::span<const Point> scatter);

// Squared Mahalanobis distance of p from the ellipse centre.
double mahalanobis_sq(const ConfidenceEllipse& e, Point p);

// Chi-square(2) survival at the Mahalanobis distance: exp(-d^2 / 2).
double alpha_at(const ConfidenceEllipse& e, Point p);

// d^2 <= -2 ln(alpha_limit); points on the contour count as inside.
bool within_ellipse(const ConfidenceEllipse& e, Point p, double alpha_limit = 0.01);

EllipseAxes ellipse_axes(const ConfidenceEllipse& e, double alpha_limit = 0.01);

// Inverse of ellipse_axes: the covariance entries implied by the axes.
ConfidenceEllipse ellipse_from_axes(Point center, const EllipseAxes& axes, double alpha_limit);

// Deterministic shuffle then split into k folds whose sizes differ by <= 1
// (the first n % k folds take the extra case). Errors: invalid_argument.
std::vector<std::vector<std::string>> kfold_partition(std::vector<std::string> case_ids, std::size_t k,
                                                      std::uint64_t seed);

}  // namespace cephlm::evalkit
