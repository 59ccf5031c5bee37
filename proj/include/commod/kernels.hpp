#pragma once

// Data-parallel inner loops. Every kernel has a serial reference path and an
// OpenMP path selected by Exec; both produce bit-identical results (no
// reordered floating-point reductions), which the unit tests assert.

#include <bit>
#include <cstdint>
#include <limits>
#include <span>

#include "commod/mat.hpp"

namespace commod::kernels {

enum class Exec { serial, parallel };

// Below this many rows the parallel path falls back to serial.
inline constexpr std::size_t kParallelRowThreshold = 512;

/// out(n, o) = sum_i X(n, i) * W[o * in + i] + b[o]
void affine(const Mat& X, std::span<const double> W, std::span<const double> b, Mat& out,
            Exec exec = Exec::parallel);

/// dW[o * in + i] += sum_n G(n, o) * X(n, i);  db[o] += sum_n G(n, o)
void affine_grad_params(const Mat& G, const Mat& X, std::span<double> dW, std::span<double> db,
                        Exec exec = Exec::parallel);

/// dX(n, i) = sum_o G(n, o) * W[o * in + i]
void affine_grad_input(const Mat& G, std::span<const double> W, std::size_t in, Mat& dX,
                       Exec exec = Exec::parallel);

struct MaskOptimum {
  std::uint64_t mask = 0;
  double value = std::numeric_limits<double>::infinity();
};

/// Minimum of eval(mask) over all masks in [0, 2^bits). Ties resolve to the
/// smallest mask.
template <class Eval>
MaskOptimum min_over_masks(unsigned bits, Eval&& eval, Exec exec = Exec::parallel) {
  const std::int64_t total = std::int64_t{1} << bits;
  MaskOptimum best;
  if (exec == Exec::serial) {
    for (std::int64_t m = 0; m < total; ++m) {
      const double v = eval(static_cast<std::uint64_t>(m));
      if (v < best.value) best = {static_cast<std::uint64_t>(m), v};
    }
    return best;
  }
#pragma omp parallel
  {
    MaskOptimum local;
#pragma omp for schedule(static) nowait
    for (std::int64_t m = 0; m < total; ++m) {
      const double v = eval(static_cast<std::uint64_t>(m));
      if (v < local.value) local = {static_cast<std::uint64_t>(m), v};
    }
#pragma omp critical(commod_min_over_masks)
    {
      if (local.value < best.value || (local.value == best.value && local.mask < best.mask)) {
        best = local;
      }
    }
  }
  return best;
}

/// Maximum of eval(mask) over masks of `bits` bits with exactly k bits set.
/// Ties resolve to the smallest mask.
template <class Eval>
MaskOptimum max_over_k_subsets(unsigned bits, unsigned k, Eval&& eval, Exec exec = Exec::parallel) {
  auto negated = [&](std::uint64_t m) {
    if (static_cast<unsigned>(std::popcount(m)) != k) {
      return std::numeric_limits<double>::infinity();
    }
    return -eval(m);
  };
  MaskOptimum r = min_over_masks(bits, negated, exec);
  r.value = -r.value;
  return r;
}

}  // namespace commod::kernels
