#include "cephlm/patchset/dataset.hpp"

#include <cmath>
#include <json.hpp>
#include <limits>

#include "cephlm/binary_io.hpp"
#include "cephlm/error.hpp"
#include "cephlm/sha256.hpp"

namespace cephlm::patchset {

using nlohmann::json;

std::filesystem::path manifest_path_for(const std::filesystem::path& blob_path) {
  return blob_path.string() + ".json";
}

DatasetManifest serialize_dataset(std::span<const PatchSample> samples, const std::vector<std::string>& labels,
                                  const std::filesystem::path& path) {
  if (labels.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(Errc::invalid_argument, "too many labels for a u16 label id");
  }
  std::map<std::string, std::uint16_t> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) ids.emplace(labels[i], static_cast<std::uint16_t>(i));

  DatasetManifest m;
  m.count = samples.size();
  m.labels = labels;
  for (const auto& l : labels) m.label_counts[l] = 0;

  ByteWriter w;
  w.bytes().reserve(samples.size() * kDatasetRecordBytes);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (const auto& s : samples) {
    auto it = ids.find(s.label);
    if (it == ids.end()) throw Error(Errc::invalid_argument, "label '" + s.label + "' is not in the label list");
    w.put<std::uint16_t>(it->second);
    w.put<float>(s.point_uv ? (*s.point_uv)[0] : nan);
    w.put<float>(s.point_uv ? (*s.point_uv)[1] : nan);
    for (float f : s.source_rect) w.put<float>(f);
    w.put_bytes(s.pixels.data(), s.pixels.size());
    ++m.label_counts[s.label];
    if (m.cases.empty() || m.cases.back().case_id != s.case_id) m.cases.push_back({s.case_id, 0});
    ++m.cases.back().count;
  }
  m.sha256 = sha256_hex(w.bytes());
  write_file_bytes(path, w.bytes());

  json doc;
  doc["format_version"] = kDatasetFormatVersion;
  doc["record_bytes"] = kDatasetRecordBytes;
  doc["count"] = m.count;
  doc["labels"] = m.labels;
  json counts = json::object();
  for (const auto& [l, c] : m.label_counts) counts[l] = c;
  doc["label_counts"] = counts;
  json cases = json::array();
  for (const auto& c : m.cases) cases.push_back({{"case_id", c.case_id}, {"count", c.count}});
  doc["cases"] = cases;
  doc["sha256"] = m.sha256;
  write_file_text(manifest_path_for(path), doc.dump(2) + "\n");
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& blob_path) {
  const auto mpath = manifest_path_for(blob_path);
  if (!std::filesystem::exists(mpath)) throw Error(Errc::missing_file, mpath.string());
  json doc;
  try {
    doc = json::parse(read_file_text(mpath));
  } catch (const json::parse_error& e) {
    throw Error(Errc::malformed_json, e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw Error(Errc::version_mismatch, "dataset format version " + doc["format_version"].dump());
    }
    DatasetManifest m;
    m.count = doc.at("count").get<std::size_t>();
    m.labels = doc.at("labels").get<std::vector<std::string>>();
    for (const auto& [l, c] : doc.at("label_counts").items()) m.label_counts[l] = c.get<std::size_t>();
    for (const auto& c : doc.at("cases")) {
      m.cases.push_back({c.at("case_id").get<std::string>(), c.at("count").get<std::size_t>()});
    }
    m.sha256 = doc.at("sha256").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::schema_error, std::string("dataset manifest: ") + e.what());
  }
}

std::vector<PatchSample> deserialize_dataset(const std::filesystem::path& path, DatasetManifest* manifest) {
  if (!std::filesystem::exists(path)) throw Error(Errc::missing_file, path.string());
  DatasetManifest m = read_manifest(path);
  const auto bytes = read_file_bytes(path);
  if (sha256_hex(bytes) != m.sha256) throw Error(Errc::checksum_mismatch, path.string());
  if (bytes.size() != m.count * kDatasetRecordBytes) {
    throw Error(Errc::checksum_mismatch, "record count disagrees with manifest: " + path.string());
  }

  std::vector<PatchSample> out(m.count);
  ByteReader r(bytes);
  std::size_t run = 0, left_in_run = m.cases.empty() ? 0 : m.cases[0].count;
  for (auto& s : out) {
    const auto id = r.get<std::uint16_t>();
    if (id >= m.labels.size()) throw Error(Errc::corrupt_file, "label id out of range");
    s.label = m.labels[id];
    const float u = r.get<float>();
    const float v = r.get<float>();
    if (!std::isnan(u)) s.point_uv = std::array<float, 2>{u, v};
    for (auto& f : s.source_rect) f = r.get<float>();
    const auto px = r.get_bytes(kPatchPixels);
    std::memcpy(s.pixels.data(), px.data(), kPatchPixels);
    while (left_in_run == 0 && run + 1 < m.cases.size()) left_in_run = m.cases[++run].count;
    if (run < m.cases.size()) s.case_id = m.cases[run].case_id;
    if (left_in_run > 0) --left_in_run;
  }
  if (manifest) *manifest = std::move(m);
  return out;
}

}  // namespace cephlm::patchset
