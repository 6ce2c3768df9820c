#include "rfc/grid.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace rfc {

namespace {

void require_same_dims(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("mask dims differ: " + std::to_string(a.h) + "x" +
                                std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                                std::to_string(b.w));
  }
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

bool Mask::subset_of(const Mask& other) const {
  require_same_dims(*this, other);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] && !other.cells[i]) return false;
  }
  return true;
}

bool Mask::intersects(const Mask& other) const {
  require_same_dims(*this, other);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] && other.cells[i]) return true;
  }
  return false;
}

bool Mask::connected() const {
  const std::size_t total = count();
  if (total == 0) return true;
  std::vector<std::uint8_t> seen(cells.size(), 0);
  std::vector<std::size_t> stack;
  const auto first = static_cast<std::size_t>(
      std::find(cells.begin(), cells.end(), std::uint8_t{1}) - cells.begin());
  stack.push_back(first);
  seen[first] = 1;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    ++reached;
    const std::size_t r = i / w, c = i % w;
    auto visit = [&](std::size_t j) {
      if (cells[j] && !seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
    };
    if (r > 0) visit(i - w);
    if (r + 1 < h) visit(i + w);
    if (c > 0) visit(i - 1);
    if (c + 1 < w) visit(i + 1);
  }
  return reached == total;
}

Mask Mask::operator|(const Mask& o) const {
  require_same_dims(*this, o);
  Mask out = *this;
  for (std::size_t i = 0; i < cells.size(); ++i) out.cells[i] = cells[i] | o.cells[i];
  return out;
}

Mask Mask::operator&(const Mask& o) const {
  require_same_dims(*this, o);
  Mask out = *this;
  for (std::size_t i = 0; i < cells.size(); ++i) out.cells[i] = cells[i] & o.cells[i];
  return out;
}

Mask Mask::minus(const Mask& o) const {
  require_same_dims(*this, o);
  Mask out = *this;
  for (std::size_t i = 0; i < cells.size(); ++i) out.cells[i] = cells[i] && !o.cells[i];
  return out;
}

Mask Mask::dilated() const {
  Mask out = *this;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!at(r, c)) continue;
      if (r > 0) out.set(r - 1, c);
      if (r + 1 < h) out.set(r + 1, c);
      if (c > 0) out.set(r, c - 1);
      if (c + 1 < w) out.set(r, c + 1);
    }
  }
  return out;
}

std::string rle_encode(const Mask& m) {
  std::ostringstream os;
  os << m.h << ' ' << m.w;
  std::size_t i = 0;
  while (i < m.cells.size()) {
    std::size_t j = i;
    while (j < m.cells.size() && m.cells[j] == m.cells[i]) ++j;
    os << ' ' << int(m.cells[i]) << ':' << (j - i);
    i = j;
  }
  return os.str();
}

Mask rle_decode(const std::string& s) {
  std::istringstream is(s);
  std::size_t h = 0, w = 0;
  if (!(is >> h >> w)) throw std::invalid_argument("rle: missing dimensions");
  Mask m(h, w);
  std::size_t pos = 0;
  std::string run;
  while (is >> run) {
    const auto colon = run.find(':');
    if (colon != 1 || (run[0] != '0' && run[0] != '1')) {
      throw std::invalid_argument("rle: bad run '" + run + "'");
    }
    std::size_t len = 0;
    try {
      len = std::stoul(run.substr(2));
    } catch (const std::exception&) {
      throw std::invalid_argument("rle: bad run '" + run + "'");
    }
    if (pos + len > m.cells.size()) throw std::invalid_argument("rle: runs exceed mask size");
    std::fill_n(m.cells.begin() + static_cast<std::ptrdiff_t>(pos), len,
                static_cast<std::uint8_t>(run[0] == '1'));
    pos += len;
  }
  if (pos != m.cells.size()) throw std::invalid_argument("rle: runs do not cover the mask");
  return m;
}

}  // namespace rfc
