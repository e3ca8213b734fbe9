#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "cephlm/patchset/catalog.hpp"
#include "cephlm/patchset/geometry.hpp"
#include "cephlm/patchset/image.hpp"

namespace cephlm::patchset {

inline constexpr double kDefaultPixelSpacingMm = 0.1;

struct Cephalogram {
  std::string id;
  GrayImage image;
  double pixel_spacing_mm = kDefaultPixelSpacingMm;

  std::size_t width() const { return image.width; }
  std::size_t height() const { return image.height; }
};

struct AnnotatedPoint {
  Point position;
  Tissue tissue = Tissue::hard;
};

struct AnnotationSet {
  std::string case_id;
  double pixel_spacing_mm = kDefaultPixelSpacingMm;
  std::map<std::string, AnnotatedPoint> points;
};

struct Case {
  Cephalogram ceph;
  AnnotationSet annotations;
};

// Loads and validates an image + annotation pair against the catalog.
// Errors: missing_file, malformed_json, schema_error, unknown_landmark, out_of_bounds.
Case load_case(const std::filesystem::path& image_path, const std::filesystem::path& annotation_path,
               const LandmarkCatalog& catalog);

AnnotationSet parse_annotation_json(const std::string& text, const LandmarkCatalog& catalog);
std::string annotation_to_json(const AnnotationSet& annotations);
void write_annotation(const AnnotationSet& annotations, const std::filesystem::path& path);

bool inside_image(Point p, std::size_t width, std::size_t height);

}  // namespace cephlm::patchset
