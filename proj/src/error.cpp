#include "ymwml/error.hpp"

namespace ymwml {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_shape: return "invalid-shape";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::non_finite: return "non-finite";
    case Errc::axis_out_of_range: return "axis-out-of-range";
    case Errc::tape_reset: return "tape-reset";
    case Errc::non_scalar_loss: return "non-scalar-loss";
    case Errc::missing_gradient: return "missing-gradient";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::config: return "config";
    case Errc::format: return "format";
    case Errc::truncated: return "truncated";
    case Errc::io: return "io";
    case Errc::range: return "range";
    case Errc::orphan_mask: return "orphan-mask";
    case Errc::malformed_split: return "malformed-split";
    case Errc::empty_input: return "empty-input";
  }
  return "unknown";
}

}  // namespace ymwml
