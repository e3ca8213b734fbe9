#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cephlm/nets/model.hpp"
#include "cephlm/nets/train.hpp"

namespace cephlm::nets {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::vector<std::string> labels;  // PC classes, or the single PE landmark
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  MetricsHistory history;
};

// Layout: "CEPHLMCK", u32 version, u32 header length, JSON header (arch,
// dtype, tensor shapes, meta), little-endian tensor data, then the hex
// SHA-256 of everything before it.
template <typename T>
void save_checkpoint(const Model<T>& model, const CheckpointMeta& meta, const std::filesystem::path& path);

// Errors: missing_file, corrupt_file (bad magic, truncation, checksum),
// version_mismatch, arch_mismatch (dtype or `expected` differs).
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr,
                         const ModelArch* expected = nullptr);

}  // namespace cephlm::nets
