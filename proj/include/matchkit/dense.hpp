#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace matchkit {

// Plain dense row-major matrix of doubles. Used for contexts, soft matchings,
// reward tables and metric vectors; the autodiff engine has its own storage.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimensions");
  }

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

  bool operator==(const Mat&) const = default;
};

}  // namespace matchkit
