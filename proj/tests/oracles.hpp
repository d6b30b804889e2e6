#pragma once

// Independent reference implementations used as test oracles. Plain loops only; nothing here
// calls into the library's kernels.

#include <cmath>
#include <random>

#include "monet/tensor.hpp"

namespace oracle {

using monet::DenseTensor;
using monet::Shape;

inline DenseTensor random(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  DenseTensor t(std::move(s));
  std::normal_distribution<double> d(0.0, scale);
  for (double& v : t.data()) v = d(rng);
  return t;
}

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  const std::size_t p = a.shape()[0], q = a.shape()[1], r = b.shape()[1];
  DenseTensor c({p, r});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += a[i * q + k] * b[k * r + j];
      c[i * r + j] = s;
    }
  return c;
}

/// y[row, i] = Σ_j w[i, j] x[row, j] + bias[i]
inline DenseTensor linear(const DenseTensor& x, const DenseTensor& w, const DenseTensor* bias) {
  const std::size_t m = w.shape()[0], d = w.shape()[1], rows = x.size() / d;
  Shape s = x.shape();
  s.back() = m;
  DenseTensor y(s);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < m; ++i) {
      double acc = bias ? (*bias)[i] : 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += w[i * d + j] * x[r * d + j];
      y[r * m + i] = acc;
    }
  return y;
}

/// Convolution by im2col: flatten each window into a row (ky, kx, ci order) and multiply by
/// the flattened kernel.
inline DenseTensor conv_im2col(const DenseTensor& x, const DenseTensor& w, const DenseTensor& bias, std::size_t st) {
  const std::size_t B = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3];
  const std::size_t O = w.shape()[0], K = w.shape()[1];
  const std::size_t oh = (H - K) / st + 1, ow = (W - K) / st + 1, cols = K * K * C;
  DenseTensor patches({B * oh * ow, cols});
  std::size_t row = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx, ++row) {
        std::size_t col = 0;
        for (std::size_t ky = 0; ky < K; ++ky)
          for (std::size_t kx = 0; kx < K; ++kx)
            for (std::size_t c = 0; c < C; ++c)
              patches[row * cols + col++] = x[((b * H + y * st + ky) * W + xx * st + kx) * C + c];
      }
  DenseTensor wf({O, cols}, std::vector<double>(w.data().begin(), w.data().end()));
  DenseTensor flat = linear(patches, wf, &bias);
  return flat.reshaped({B, oh, ow, O});
}

/// Spatial shift by explicit direction table: group 0 +width, 1 −width, 2 +height, 3 −height.
inline DenseTensor shift(const DenseTensor& x) {
  const std::size_t B = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3], g = C / 4;
  DenseTensor y = x;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t grp = c / g;
          std::ptrdiff_t sh = h, sw = w;
          if (grp == 0) sw -= 1;
          if (grp == 1) sw += 1;
          if (grp == 2) sh -= 1;
          if (grp == 3) sh += 1;
          if (sh < 0 || sw < 0 || sh >= (std::ptrdiff_t)H || sw >= (std::ptrdiff_t)W) continue;  // border keeps its value
          y[((b * H + h) * W + w) * C + c] = x[((b * H + sh) * W + sw) * C + c];
        }
  return y;
}

}  // namespace oracle
