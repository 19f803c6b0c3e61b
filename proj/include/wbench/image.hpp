#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace wbench {

// Row-major H x W grid.
template <class T>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), values(h * w, fill) {}
  Grid(std::size_t h, std::size_t w, std::vector<T> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw std::invalid_argument("Grid: value count does not match shape");
  }

  std::size_t size() const noexcept { return values.size(); }
  T& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }

  bool same_shape(const Grid& o) const noexcept { return height == o.height && width == o.width; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using Image = Grid<double>;
using Mask = Grid<std::uint8_t>;

inline std::size_t count_true(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values) n += v ? 1 : 0;
  return n;
}

}  // namespace wbench
