#pragma once

#include <cstddef>
#include <optional>

#include "dpm/types.hpp"

namespace dpm {

struct ImageShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// N observations of dimension D, one per row.
struct Dataset {
  DataKind kind = DataKind::Binary;
  Matrix data;
  std::optional<ImageShape> shape_hint;

  std::size_t n() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(data.cols()); }

  /// Throws Error(Domain) if binary data holds anything but 0/1, or the
  /// shape hint disagrees with D.
  void validate() const;
};

}  // namespace dpm
