#include "cephlm/error.hpp"
#include "cephlm/rng.hpp"

#include <cmath>
#include <numbers>

namespace cephlm {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::label_out_of_range: return "label_out_of_range";
    case Errc::missing_gradient: return "missing_gradient";
    case Errc::not_scalar: return "not_scalar";
    case Errc::missing_file: return "missing_file";
    case Errc::io_error: return "io_error";
    case Errc::malformed_json: return "malformed_json";
    case Errc::schema_error: return "schema_error";
    case Errc::unknown_landmark: return "unknown_landmark";
    case Errc::out_of_bounds: return "out_of_bounds";
    case Errc::degenerate_rect: return "degenerate_rect";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::arch_mismatch: return "arch_mismatch";
    case Errc::corrupt_file: return "corrupt_file";
    case Errc::empty_input: return "empty_input";
    case Errc::class_absent: return "class_absent";
    case Errc::degenerate_scatter: return "degenerate_scatter";
    case Errc::model_mismatch: return "model_mismatch";
    case Errc::config_error: return "config_error";
    case Errc::missing_artifact: return "missing_artifact";
    case Errc::numeric_failure: return "numeric_failure";
  }
  return "unknown";
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng Rng::derive(std::uint64_t seed, std::string_view key) {
  return Rng(mix64(seed ^ mix64(hash_string(key))));
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t index) {
  return Rng(mix64(seed ^ mix64(index + 0x632be59bd9b4e019ULL)));
}

std::size_t Rng::index(std::size_t n) {
  if (n <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % n);
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace cephlm
