#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cephlm/patchset/patches.hpp"

namespace cephlm::patchset {

inline constexpr int kDatasetFormatVersion = 1;
// u16 label id, 2 x f32 point, 4 x f32 rect, 4096 pixel bytes.
inline constexpr std::size_t kDatasetRecordBytes = 2 + 2 * 4 + 4 * 4 + kPatchPixels;

struct CaseRun {
  std::string case_id;
  std::size_t count = 0;
};

struct DatasetManifest {
  std::size_t count = 0;
  std::vector<std::string> labels;  // label id -> name
  std::map<std::string, std::size_t> label_counts;
  std::vector<CaseRun> cases;       // consecutive records per case, in file order
  std::string sha256;               // of the binary blob
};

std::filesystem::path manifest_path_for(const std::filesystem::path& blob_path);

// Writes the little-endian record blob at `path` and its JSON manifest next
// to it (<path>.json). Every sample label must appear in `labels`.
DatasetManifest serialize_dataset(std::span<const PatchSample> samples, const std::vector<std::string>& labels,
                                  const std::filesystem::path& path);

DatasetManifest read_manifest(const std::filesystem::path& blob_path);

// Errors: missing_file, io_error, checksum_mismatch (also for truncation).
std::vector<PatchSample> deserialize_dataset(const std::filesystem::path& path, DatasetManifest* manifest = nullptr);

}  // namespace cephlm::patchset
