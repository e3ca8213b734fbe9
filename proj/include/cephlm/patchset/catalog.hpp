#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cephlm::patchset {

enum class Tissue { hard, soft };

std::string_view tissue_name(Tissue t);
std::optional<Tissue> parse_tissue(std::string_view s);

inline constexpr std::string_view kBackground = "BACKGROUND";

/// Per-landmark patch criteria: the window size range used both for
/// training crops and for the inference scale set.
struct LandmarkSpec {
  std::string name;
  Tissue tissue = Tissue::hard;
  double scale_min = 80.0;
  double scale_max = 320.0;
  // Extra inference windows as (w, h) ratios applied to the mid scale.
  std::vector<std::pair<double, double>> aspect_set;
  std::size_t patches_per_image = 10;

  void validate() const;
};

class LandmarkCatalog {
 public:
  LandmarkCatalog() = default;
  explicit LandmarkCatalog(std::vector<LandmarkSpec> specs);

  // 22 hard + 11 soft tissue landmarks with uniform 80-320 px criteria.
  static LandmarkCatalog clinical_default();

  const std::vector<LandmarkSpec>& specs() const { return specs_; }
  std::size_t size() const { return specs_.size(); }
  const LandmarkSpec& at(std::size_t i) const { return specs_.at(i); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  const LandmarkSpec* find(std::string_view name) const;
  std::vector<std::string> names() const;

  // Class labels for the patch classifier: landmark names then BACKGROUND.
  std::vector<std::string> class_labels() const;

 private:
  std::vector<LandmarkSpec> specs_;
};

}  // namespace cephlm::patchset
