#pragma once

#include <filesystem>
#include <string>

#include "cephlm/numcore/tensor.hpp"
#include "cephlm/rng.hpp"

namespace testsupport {

template <typename T>
cephlm::numcore::Tensor<T> random_tensor(cephlm::numcore::Shape shape, cephlm::Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
  cephlm::numcore::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("cephlm_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testsupport
