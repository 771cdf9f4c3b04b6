#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wsi {

/// Failure categories raised by the toolkit. The CLI maps every code to exit
/// status 2; usage problems never reach this type.
enum class Errc {
  io,
  format,
  corruption,
  unsupported_dtype,
  missing_name,
  shape_mismatch,
  argument,
  degenerate_direction,
  evaluation,
  missing_reference,
  degenerate_reference,
  empty_group,
  insufficient_seeds,
  incomplete_grid,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace wsi
