#include "commod/kernels.hpp"

#include <cmath>

#include "commod/error.hpp"

namespace commod {

bool Mat::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Mat Mat::select_rows(std::span<const std::size_t> indices) const {
  Mat out(indices.size(), cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Mat Mat::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Mat out(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != out.cols) throw Error("Mat::from_rows: ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
  }
  return out;
}

namespace kernels {
namespace {

bool go_parallel(Exec exec, std::size_t rows) {
  return exec == Exec::parallel && rows >= kParallelRowThreshold;
}

void affine_row(const Mat& X, std::span<const double> W, std::span<const double> b, Mat& out,
                std::size_t n) {
  const std::size_t in = X.cols;
  const auto x = X.row(n);
  auto y = out.row(n);
  for (std::size_t o = 0; o < out.cols; ++o) {
    const double* w = W.data() + o * in;
    double acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += x[i] * w[i];
    y[o] = acc;
  }
}

}  // namespace

void affine(const Mat& X, std::span<const double> W, std::span<const double> b, Mat& out,
            Exec exec) {
  const std::size_t out_width = b.size();
  if (W.size() != out_width * X.cols) throw Error("affine: weight shape mismatch");
  if (out.rows != X.rows || out.cols != out_width) out = Mat(X.rows, out_width);
  const auto rows = static_cast<std::int64_t>(X.rows);
  if (go_parallel(exec, X.rows)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < rows; ++n) affine_row(X, W, b, out, static_cast<std::size_t>(n));
  } else {
    for (std::int64_t n = 0; n < rows; ++n) affine_row(X, W, b, out, static_cast<std::size_t>(n));
  }
}

void affine_grad_params(const Mat& G, const Mat& X, std::span<double> dW, std::span<double> db,
                        Exec exec) {
  const std::size_t in = X.cols;
  const std::size_t outw = G.cols;
  if (G.rows != X.rows || dW.size() != outw * in || db.size() != outw) {
    throw Error("affine_grad_params: shape mismatch");
  }
  // Each output unit accumulates over rows in the same order on both paths.
  auto unit = [&](std::size_t o) {
    double* w = dW.data() + o * in;
    double bias = 0.0;
    for (std::size_t n = 0; n < G.rows; ++n) {
      const double g = G(n, o);
      if (g == 0.0) continue;
      bias += g;
      const auto x = X.row(n);
      for (std::size_t i = 0; i < in; ++i) w[i] += g * x[i];
    }
    db[o] += bias;
  };
  const auto units = static_cast<std::int64_t>(outw);
  if (go_parallel(exec, X.rows) && outw > 1) {
#pragma omp parallel for schedule(static)
    for (std::int64_t o = 0; o < units; ++o) unit(static_cast<std::size_t>(o));
  } else {
    for (std::int64_t o = 0; o < units; ++o) unit(static_cast<std::size_t>(o));
  }
}

void affine_grad_input(const Mat& G, std::span<const double> W, std::size_t in, Mat& dX,
                       Exec exec) {
  if (W.size() != G.cols * in) throw Error("affine_grad_input: shape mismatch");
  if (dX.rows != G.rows || dX.cols != in) dX = Mat(G.rows, in);
  auto row = [&](std::size_t n) {
    auto dx = dX.row(n);
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t o = 0; o < G.cols; ++o) {
      const double g = G(n, o);
      const double* w = W.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dx[i] += g * w[i];
    }
  };
  const auto rows = static_cast<std::int64_t>(G.rows);
  if (go_parallel(exec, G.rows)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < rows; ++n) row(static_cast<std::size_t>(n));
  } else {
    for (std::int64_t n = 0; n < rows; ++n) row(static_cast<std::size_t>(n));
  }
}

}  // namespace kernels
}  // namespace commod
