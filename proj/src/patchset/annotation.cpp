#include "cephlm/patchset/annotation.hpp"

#include <json.hpp>

#include "cephlm/binary_io.hpp"
#include "cephlm/error.hpp"

namespace cephlm::patchset {

using nlohmann::json;

bool inside_image(Point p, std::size_t width, std::size_t height) {
  return p.x >= 0.0 && p.y >= 0.0 && p.x <= static_cast<double>(width) - 1.0 &&
         p.y <= static_cast<double>(height) - 1.0;
}

AnnotationSet parse_annotation_json(const std::string& text, const LandmarkCatalog& catalog) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::malformed_json, e.what());
  }
  if (!doc.is_object()) throw Error(Errc::schema_error, "annotation root must be an object");
  if (!doc.contains("case_id") || !doc["case_id"].is_string()) {
    throw Error(Errc::schema_error, "annotation needs a string case_id");
  }
  if (!doc.contains("landmarks") || !doc["landmarks"].is_object()) {
    throw Error(Errc::schema_error, "annotation needs a landmarks object");
  }

  AnnotationSet ann;
  ann.case_id = doc["case_id"].get<std::string>();
  if (doc.contains("pixel_spacing_mm")) {
    if (!doc["pixel_spacing_mm"].is_number() || !(doc["pixel_spacing_mm"].get<double>() > 0.0)) {
      throw Error(Errc::schema_error, "pixel_spacing_mm must be a positive number");
    }
    ann.pixel_spacing_mm = doc["pixel_spacing_mm"].get<double>();
  }
  for (const auto& [name, entry] : doc["landmarks"].items()) {
    const LandmarkSpec* spec = catalog.find(name);
    if (!spec) throw Error(Errc::unknown_landmark, "landmark '" + name + "' is not in the catalog");
    if (!entry.is_object() || !entry.contains("x") || !entry.contains("y") || !entry["x"].is_number() ||
        !entry["y"].is_number()) {
      throw Error(Errc::schema_error, "landmark '" + name + "' needs numeric x and y");
    }
    AnnotatedPoint p;
    p.position = {entry["x"].get<double>(), entry["y"].get<double>()};
    p.tissue = spec->tissue;
    if (entry.contains("tissue")) {
      auto t = entry["tissue"].is_string() ? parse_tissue(entry["tissue"].get<std::string>()) : std::nullopt;
      if (!t) throw Error(Errc::schema_error, "landmark '" + name + "' has an invalid tissue value");
      if (*t != spec->tissue) throw Error(Errc::schema_error, "landmark '" + name + "' tissue disagrees with catalog");
      p.tissue = *t;
    }
    ann.points.emplace(name, p);
  }
  return ann;
}

Case load_case(const std::filesystem::path& image_path, const std::filesystem::path& annotation_path,
               const LandmarkCatalog& catalog) {
  if (!std::filesystem::exists(image_path)) throw Error(Errc::missing_file, image_path.string());
  if (!std::filesystem::exists(annotation_path)) throw Error(Errc::missing_file, annotation_path.string());

  Case out;
  out.annotations = parse_annotation_json(read_file_text(annotation_path), catalog);
  out.ceph.image = read_image(image_path);
  out.ceph.id = out.annotations.case_id;
  out.ceph.pixel_spacing_mm = out.annotations.pixel_spacing_mm;
  if (out.ceph.width() == 0 || out.ceph.height() == 0) throw Error(Errc::io_error, "empty image " + image_path.string());
  for (const auto& [name, p] : out.annotations.points) {
    if (!inside_image(p.position, out.ceph.width(), out.ceph.height())) {
      throw Error(Errc::out_of_bounds, "landmark '" + name + "' at (" + std::to_string(p.position.x) + ", " +
                                           std::to_string(p.position.y) + ") lies outside the image");
    }
  }
  return out;
}

std::string annotation_to_json(const AnnotationSet& annotations) {
  json doc;
  doc["case_id"] = annotations.case_id;
  doc["pixel_spacing_mm"] = annotations.pixel_spacing_mm;
  json lm = json::object();
  for (const auto& [name, p] : annotations.points) {
    lm[name] = {{"x", p.position.x}, {"y", p.position.y}, {"tissue", std::string(tissue_name(p.tissue))}};
  }
  doc["landmarks"] = lm;
  return doc.dump(2) + "\n";
}

void write_annotation(const AnnotationSet& annotations, const std::filesystem::path& path) {
  write_file_text(path, annotation_to_json(annotations));
}

}  // namespace cephlm::patchset
