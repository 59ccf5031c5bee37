#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace commod {

/// Dense row-major matrix of doubles.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  bool empty() const { return data.empty(); }
  bool all_finite() const;

  // Gathers the listed rows into a new matrix.
  Mat select_rows(std::span<const std::size_t> indices) const;

  static Mat from_rows(const std::vector<std::vector<double>>& rows);
};

}  // namespace commod
