#include "wsi/error.hpp"

namespace wsi {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::corruption: return "corruption";
    case Errc::unsupported_dtype: return "unsupported-dtype";
    case Errc::missing_name: return "missing-name";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::argument: return "argument";
    case Errc::degenerate_direction: return "degenerate-direction";
    case Errc::evaluation: return "evaluation";
    case Errc::missing_reference: return "missing-reference";
    case Errc::degenerate_reference: return "degenerate-reference";
    case Errc::empty_group: return "empty-group";
    case Errc::insufficient_seeds: return "insufficient-seeds";
    case Errc::incomplete_grid: return "incomplete-grid";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

}  // namespace wsi
