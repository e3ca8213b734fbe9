#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cephlm {

enum class Errc {
  shape_mismatch,
  invalid_argument,
  label_out_of_range,
  missing_gradient,
  not_scalar,
  missing_file,
  io_error,
  malformed_json,
  schema_error,
  unknown_landmark,
  out_of_bounds,
  degenerate_rect,
  checksum_mismatch,
  version_mismatch,
  arch_mismatch,
  corrupt_file,
  empty_input,
  class_absent,
  degenerate_scatter,
  model_mismatch,
  config_error,
  missing_artifact,
  numeric_failure,
};

std::string_view errc_name(Errc code) noexcept;

/// Structured error carried by every failure the toolkit reports.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cephlm
