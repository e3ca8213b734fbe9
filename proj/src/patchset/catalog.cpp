#include "cephlm/patchset/catalog.hpp"

#include <set>

#include "cephlm/error.hpp"

namespace cephlm::patchset {

std::string_view tissue_name(Tissue t) { return t == Tissue::hard ? "hard" : "soft"; }

std::optional<Tissue> parse_tissue(std::string_view s) {
  if (s == "hard") return Tissue::hard;
  if (s == "soft") return Tissue::soft;
  return std::nullopt;
}

void LandmarkSpec::validate() const {
  if (name.empty() || name == kBackground) throw Error(Errc::config_error, "invalid landmark name '" + name + "'");
  if (!(scale_min > 0.0) || !(scale_min <= scale_max)) {
    throw Error(Errc::config_error, "landmark " + name + ": need 0 < scale_min <= scale_max");
  }
  for (const auto& [rw, rh] : aspect_set) {
    if (!(rw > 0.0) || !(rh > 0.0)) throw Error(Errc::config_error, "landmark " + name + ": aspect ratios must be > 0");
  }
}

LandmarkCatalog::LandmarkCatalog(std::vector<LandmarkSpec> specs) : specs_(std::move(specs)) {
  std::set<std::string> seen;
  for (const auto& s : specs_) {
    s.validate();
    if (!seen.insert(s.name).second) throw Error(Errc::config_error, "duplicate landmark " + s.name);
  }
}

LandmarkCatalog LandmarkCatalog::clinical_default() {
  static const char* hard[] = {"S",   "N",  "Po",  "Or",      "Ar",      "Go", "Co",   "Me",   "Pog", "Gn",  "Ans",
                               "Pns", "Ba", "Pt",  "Point a", "Point b", "U1", "U1_c", "L1",   "L1_c", "U6", "L6"};
  static const char* soft[] = {"Gla", "Soft N", "Prn", "Sn", "Ls", "Sto", "Li", "Sm", "Soft Pog", "Soft Gn", "Soft Mn"};
  std::vector<LandmarkSpec> specs;
  auto add = [&](const char* n, Tissue t) {
    LandmarkSpec s;
    s.name = n;
    s.tissue = t;
    specs.push_back(std::move(s));
  };
  for (const char* n : hard) add(n, Tissue::hard);
  for (const char* n : soft) add(n, Tissue::soft);
  return LandmarkCatalog(std::move(specs));
}

std::optional<std::size_t> LandmarkCatalog::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name == name) return i;
  }
  return std::nullopt;
}

const LandmarkSpec* LandmarkCatalog::find(std::string_view name) const {
  auto i = index_of(name);
  return i ? &specs_[*i] : nullptr;
}

std::vector<std::string> LandmarkCatalog::names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) out.push_back(s.name);
  return out;
}

std::vector<std::string> LandmarkCatalog::class_labels() const {
  auto out = names();
  out.emplace_back(kBackground);
  return out;
}

}  // namespace cephlm::patchset
