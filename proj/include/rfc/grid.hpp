#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rfc {

/// Row-major boolean H x W grid (foregrounds, masks).
struct Mask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> cells;

  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = false)
      : h(rows), w(cols), cells(rows * cols, fill ? 1 : 0) {}

  bool at(std::size_t r, std::size_t c) const { return cells[r * w + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { cells[r * w + c] = v ? 1 : 0; }
  std::size_t size() const { return cells.size(); }
  std::size_t count() const;
  bool any() const { return count() > 0; }
  /// Every true cell of *this is true in `other`.
  bool subset_of(const Mask& other) const;
  bool intersects(const Mask& other) const;
  /// 4-connectivity of the true cells (vacuously true when empty).
  bool connected() const;

  Mask operator|(const Mask& o) const;
  Mask operator&(const Mask& o) const;
  /// Cells of *this not in `o`.
  Mask minus(const Mask& o) const;
  /// One step of 4-neighbour dilation.
  Mask dilated() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Run-length encoding "h w v:len v:len ..." of a mask, starting value first.
std::string rle_encode(const Mask& m);
/// Inverse of rle_encode; throws std::invalid_argument on malformed input.
Mask rle_decode(const std::string& s);

}  // namespace rfc
