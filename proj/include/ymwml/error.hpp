#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ymwml {

enum class Errc {
  invalid_shape,
  shape_mismatch,
  non_finite,
  axis_out_of_range,
  tape_reset,
  non_scalar_loss,
  missing_gradient,
  invalid_argument,
  config,
  format,
  truncated,
  io,
  range,
  orphan_mask,
  malformed_split,
  empty_input,
};

std::string_view to_string(Errc code);

/// Error carrying a stable category so callers (tests, CLI exit codes) can
/// branch on the kind of failure instead of parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ymwml
