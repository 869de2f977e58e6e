#pragma once

#include <cassert>
#include <vector>

namespace sbf {

// Dense row-major 2-D grid.
template <class T>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  T& operator()(int i, int j) {
    assert(i >= 0 && i < rows && j >= 0 && j < cols);
    return data[static_cast<size_t>(i) * cols + j];
  }
  const T& operator()(int i, int j) const {
    assert(i >= 0 && i < rows && j >= 0 && j < cols);
    return data[static_cast<size_t>(i) * cols + j];
  }
  size_t size() const { return data.size(); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

}  // namespace sbf
