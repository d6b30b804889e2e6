#include "monet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "monet/error.hpp"
#include "monet/ledger.hpp"
#include "monet/simd.hpp"

namespace monet::kernels {

namespace {

void require_same_shape(const DenseTensor& a, const DenseTensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const DenseTensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

OpCensus census_of(OpClass c, std::uint64_t n) {
  OpCensus k;
  k[c] = n;
  return k;
}

// out[r, j] = dot(a_r, b_j) for an (rows × n) a and (cols × n) b, both row-major.
void dot_rows(const simd::KernelTable& simd, const double* a, std::size_t rows, const double* b, std::size_t cols,
              std::size_t n, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = a + r * n;
    double* o = out + r * cols;
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      simd.dot4(ar, b + j * n, b + (j + 1) * n, b + (j + 2) * n, b + (j + 3) * n, n, o + j);
    }
    for (; j < cols; ++j) o[j] = simd.dot(ar, b + j * n, n);
  }
}

}  // namespace

GridShape grid_shape(const DenseTensor& t) {
  if (t.rank() != 4) throw DimensionError("expected a (batch, height, width, channels) grid, got " + shape_string(t.shape()));
  return GridShape{t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]};
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.shape()[0], q = a.shape()[1], r = b.shape()[1];
  if (b.shape()[0] != q) {
    throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const auto& simd = simd::active();
  DenseTensor out(Shape{p, r});
  for (std::size_t i = 0; i < p; ++i) {
    double* o = out.raw() + i * r;
    for (std::size_t k = 0; k < q; ++k) simd.axpy(a.raw()[i * q + k], b.raw() + k * r, o, r);
  }
  ledger::record(KernelKind::matmul, p * q * r, census_of(OpClass::mac, p * q * r));
  return out;
}

DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t p = a.shape()[0], q = a.shape()[1], r = b.shape()[0];
  if (b.shape()[1] != q) {
    throw DimensionError("matmul_nt: inner extents differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  DenseTensor out(Shape{p, r});
  dot_rows(simd::active(), a.raw(), p, b.raw(), r, q, out.raw());
  ledger::record(KernelKind::matmul, p * q * r, census_of(OpClass::mac, p * q * r));
  return out;
}

DenseTensor matmul_tn(const DenseTensor& a, const DenseTensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t q = a.shape()[0], p = a.shape()[1], r = b.shape()[1];
  if (b.shape()[0] != q) {
    throw DimensionError("matmul_tn: inner extents differ " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  const auto& simd = simd::active();
  DenseTensor out(Shape{p, r});
  for (std::size_t k = 0; k < q; ++k) {
    const double* ak = a.raw() + k * p;
    const double* bk = b.raw() + k * r;
    for (std::size_t i = 0; i < p; ++i) simd.axpy(ak[i], bk, out.raw() + i * r, r);
  }
  ledger::record(KernelKind::matmul, p * q * r, census_of(OpClass::mac, p * q * r));
  return out;
}

DenseTensor linear(const DenseTensor& x, const DenseTensor& w, const DenseTensor* bias) {
  require_matrix(w, "linear");
  const std::size_t m = w.shape()[0], d = w.shape()[1];
  if (x.rank() == 0 || x.cols() != d) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not end in " + std::to_string(d));
  }
  if (bias != nullptr && (bias->rank() != 1 || bias->size() != m)) {
    throw DimensionError("linear: bias " + shape_string(bias->shape()) + " does not match " + std::to_string(m));
  }
  Shape out_shape = x.shape();
  out_shape.back() = m;
  DenseTensor out(out_shape);
  const std::size_t rows = x.rows();
  dot_rows(simd::active(), x.raw(), rows, w.raw(), m, d, out.raw());
  OpCensus census = census_of(OpClass::mac, rows * d * m);
  if (bias != nullptr) {
    const auto& simd = simd::active();
    for (std::size_t r = 0; r < rows; ++r) simd.add(out.raw() + r * m, bias->raw(), out.raw() + r * m, m);
    census[OpClass::add] = rows * m;
  }
  ledger::record(KernelKind::linear, rows * d * m, census);
  return out;
}

void linear_backward(const DenseTensor& x, const DenseTensor& w, const DenseTensor& dy, DenseTensor* dx,
                     DenseTensor* dw, DenseTensor* dbias) {
  const std::size_t m = w.shape()[0], d = w.shape()[1];
  const std::size_t rows = x.rows();
  if (dy.rows() != rows || dy.cols() != m) throw DimensionError("linear_backward: gradient shape mismatch");
  const auto& simd = simd::active();
  if (dx != nullptr) *dx = DenseTensor(x.shape());
  if (dw != nullptr) *dw = DenseTensor(w.shape());
  if (dbias != nullptr) *dbias = DenseTensor(Shape{m});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = dy.raw() + r * m;
    const double* xr = x.raw() + r * d;
    for (std::size_t i = 0; i < m; ++i) {
      if (dx != nullptr) simd.axpy(g[i], w.raw() + i * d, dx->raw() + r * d, d);
      if (dw != nullptr) simd.axpy(g[i], xr, dw->raw() + i * d, d);
    }
    if (dbias != nullptr) simd.add(dbias->raw(), g, dbias->raw(), m);
  }
}

DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "hadamard");
  DenseTensor out(a.shape());
  simd::active().mul(a.raw(), b.raw(), out.raw(), a.size());
  ledger::record(KernelKind::hadamard, a.size(), census_of(OpClass::multiply, a.size()));
  return out;
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "add");
  DenseTensor out(a.shape());
  simd::active().add(a.raw(), b.raw(), out.raw(), a.size());
  ledger::record(KernelKind::add, 0, census_of(OpClass::add, a.size()));
  return out;
}

DenseTensor sub(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a, b, "sub");
  DenseTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  ledger::record(KernelKind::add, 0, census_of(OpClass::add, a.size()));
  return out;
}

DenseTensor scale(const DenseTensor& a, double alpha) {
  DenseTensor out(a.shape());
  simd::active().scale(alpha, a.raw(), out.raw(), a.size());
  ledger::record(KernelKind::scale, 0, census_of(OpClass::multiply, a.size()));
  return out;
}

void accumulate(DenseTensor& acc, const DenseTensor& x) {
  require_same_shape(acc, x, "accumulate");
  simd::active().add(acc.raw(), x.raw(), acc.raw(), acc.size());
}

void accumulate_scaled(DenseTensor& acc, const DenseTensor& x, double alpha) {
  require_same_shape(acc, x, "accumulate_scaled");
  simd::active().axpy(alpha, x.raw(), acc.raw(), acc.size());
}

DenseTensor layernorm(const DenseTensor& x, const DenseTensor& gamma, const DenseTensor& beta, double eps,
                      LayerNormStats* stats) {
  if (x.rank() == 0) throw DimensionError("layernorm: scalar input");
  const std::size_t c = x.cols();
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("layernorm: gamma/beta length does not match channel extent " + std::to_string(c));
  }
  if (!(eps >= 0.0)) throw InputError("layernorm: eps must be non-negative");
  const std::size_t rows = x.rows();
  const double inv_c = 1.0 / static_cast<double>(c);
  DenseTensor out(x.shape());
  if (stats != nullptr) {
    stats->mean.assign(rows, 0.0);
    stats->rstd.assign(rows, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.raw() + r * c;
    double* yr = out.raw() + r * c;
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += xr[j];
    const double mean = sum * inv_c;
    double sq = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xr[j] - mean;
      yr[j] = d;
      sq += d * d;
    }
    const double var = sq * inv_c;
    const double rstd = 1.0 / std::sqrt(var + eps);
    if (!std::isfinite(rstd)) throw NumericError("layernorm: zero variance with eps = 0");
    for (std::size_t j = 0; j < c; ++j) yr[j] = yr[j] * rstd * gamma[j] + beta[j];
    if (stats != nullptr) {
      stats->mean[r] = mean;
      stats->rstd[r] = rstd;
    }
  }
  OpCensus census;
  census[OpClass::add] = rows * (4 * c + 1);
  census[OpClass::multiply] = rows * (3 * c + 2);
  census[OpClass::divide] = rows;
  census[OpClass::sqrt] = rows;
  ledger::record(KernelKind::layernorm, census.total(), census, /*auxiliary=*/true);
  return out;
}

void layernorm_backward(const DenseTensor& x, const DenseTensor& gamma, const LayerNormStats& stats,
                        const DenseTensor& dy, DenseTensor& dx, DenseTensor& dgamma, DenseTensor& dbeta) {
  const std::size_t c = x.cols();
  const std::size_t rows = x.rows();
  const double inv_c = 1.0 / static_cast<double>(c);
  dx = DenseTensor(x.shape());
  dgamma = DenseTensor(gamma.shape());
  dbeta = DenseTensor(gamma.shape());
  std::vector<double> xhat(c), g(c);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.raw() + r * c;
    const double* dyr = dy.raw() + r * c;
    const double mean = stats.mean[r], rstd = stats.rstd[r];
    double mean_g = 0.0, mean_gx = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      xhat[j] = (xr[j] - mean) * rstd;
      g[j] = dyr[j] * gamma[j];
      mean_g += g[j];
      mean_gx += g[j] * xhat[j];
      dgamma[j] += dyr[j] * xhat[j];
      dbeta[j] += dyr[j];
    }
    mean_g *= inv_c;
    mean_gx *= inv_c;
    double* dxr = dx.raw() + r * c;
    for (std::size_t j = 0; j < c; ++j) dxr[j] = rstd * (g[j] - mean_g - xhat[j] * mean_gx);
  }
}

namespace {

struct ConvGeometry {
  GridShape in;
  std::size_t cout, kh, kw, out_h, out_w;
};

ConvGeometry conv_geometry(const DenseTensor& x, const DenseTensor& w, std::size_t stride) {
  const GridShape g = grid_shape(x);
  if (w.rank() != 4) throw DimensionError("conv2d: kernel must be (cout, kh, kw, cin), got " + shape_string(w.shape()));
  const std::size_t cout = w.shape()[0], kh = w.shape()[1], kw = w.shape()[2], cin = w.shape()[3];
  if (cin != g.channels) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(cin) + " channels, input has " +
                         std::to_string(g.channels));
  }
  if (stride == 0) throw DimensionError("conv2d: zero stride");
  if (kh > g.height || kw > g.width) throw DimensionError("conv2d: kernel larger than input");
  if ((g.height - kh) % stride != 0 || (g.width - kw) % stride != 0) {
    throw DimensionError("conv2d: stride " + std::to_string(stride) + " does not divide the valid range of a " +
                         std::to_string(g.height) + "x" + std::to_string(g.width) + " input");
  }
  return ConvGeometry{g, cout, kh, kw, (g.height - kh) / stride + 1, (g.width - kw) / stride + 1};
}

}  // namespace

DenseTensor conv2d(const DenseTensor& x, const DenseTensor& w, const DenseTensor* bias, std::size_t stride) {
  const ConvGeometry geo = conv_geometry(x, w, stride);
  const auto& [g, cout, kh, kw, oh, ow] = geo;
  if (bias != nullptr && bias->size() != cout) throw DimensionError("conv2d: bias length does not match cout");
  const auto& simd = simd::active();
  const std::size_t seg = kw * g.channels;  // contiguous run of one kernel row
  DenseTensor out(Shape{g.batch, oh, ow, cout});
  std::vector<double> partial(cout);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double* o = out.raw() + ((b * oh + oy) * ow + ox) * cout;
        for (std::size_t co = 0; co < cout; ++co) o[co] = bias != nullptr ? (*bias)[co] : 0.0;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const double* xs = x.raw() + ((b * g.height + oy * stride + ky) * g.width + ox * stride) * g.channels;
          // kernel rows for fixed ky are strided by kh*seg between output channels
          std::size_t co = 0;
          for (; co + 4 <= cout; co += 4) {
            const double* w0 = w.raw() + (co * kh + ky) * seg;
            simd.dot4(xs, w0, w0 + kh * seg, w0 + 2 * kh * seg, w0 + 3 * kh * seg, seg, partial.data() + co);
          }
          for (; co < cout; ++co) partial[co] = simd.dot(xs, w.raw() + (co * kh + ky) * seg, seg);
          for (co = 0; co < cout; ++co) o[co] += partial[co];
        }
      }
    }
  }
  const std::uint64_t positions = g.batch * oh * ow;
  OpCensus census = census_of(OpClass::mac, positions * seg * kh * cout);
  if (bias != nullptr) census[OpClass::add] = positions * cout;
  ledger::record(KernelKind::conv2d, positions * seg * kh * cout, census);
  return out;
}

void conv2d_backward(const DenseTensor& x, const DenseTensor& w, std::size_t stride, const DenseTensor& dy,
                     DenseTensor* dx, DenseTensor* dw, DenseTensor* dbias) {
  const ConvGeometry geo = conv_geometry(x, w, stride);
  const auto& [g, cout, kh, kw, oh, ow] = geo;
  if (dy.shape() != Shape{g.batch, oh, ow, cout}) throw DimensionError("conv2d_backward: gradient shape mismatch");
  const auto& simd = simd::active();
  const std::size_t seg = kw * g.channels;
  if (dx != nullptr) *dx = DenseTensor(x.shape());
  if (dw != nullptr) *dw = DenseTensor(w.shape());
  if (dbias != nullptr) *dbias = DenseTensor(Shape{cout});
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double* d = dy.raw() + ((b * oh + oy) * ow + ox) * cout;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::size_t xoff = ((b * g.height + oy * stride + ky) * g.width + ox * stride) * g.channels;
          for (std::size_t co = 0; co < cout; ++co) {
            const std::size_t woff = (co * kh + ky) * seg;
            if (dw != nullptr) simd.axpy(d[co], x.raw() + xoff, dw->raw() + woff, seg);
            if (dx != nullptr) simd.axpy(d[co], w.raw() + woff, dx->raw() + xoff, seg);
          }
        }
        if (dbias != nullptr) {
          for (std::size_t co = 0; co < cout; ++co) (*dbias)[co] += d[co];
        }
      }
    }
  }
}

DenseTensor global_avgpool(const DenseTensor& x) {
  const GridShape g = grid_shape(x);
  const std::size_t n = g.tokens();
  const double inv_n = 1.0 / static_cast<double>(n);
  DenseTensor out(Shape{g.batch, g.channels});
  for (std::size_t b = 0; b < g.batch; ++b) {
    double* o = out.raw() + b * g.channels;
    for (std::size_t t = 0; t < n; ++t) {
      const double* xs = x.raw() + (b * n + t) * g.channels;
      for (std::size_t c = 0; c < g.channels; ++c) o[c] += xs[c];
    }
    for (std::size_t c = 0; c < g.channels; ++c) o[c] *= inv_n;
  }
  OpCensus census;
  census[OpClass::add] = g.batch * n * g.channels;
  census[OpClass::multiply] = g.batch * g.channels;
  ledger::record(KernelKind::avgpool, census.total(), census, /*auxiliary=*/true);
  return out;
}

DenseTensor global_avgpool_backward(const DenseTensor& dy, const GridShape& g) {
  const std::size_t n = g.tokens();
  const double inv_n = 1.0 / static_cast<double>(n);
  DenseTensor dx(Shape{g.batch, g.height, g.width, g.channels});
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t t = 0; t < n; ++t) {
      double* d = dx.raw() + (b * n + t) * g.channels;
      for (std::size_t c = 0; c < g.channels; ++c) d[c] = dy.raw()[b * g.channels + c] * inv_n;
    }
  }
  return dx;
}

namespace {

// Calls fn(dst_index, src_index) for every element of a shifted grid.
template <class Fn>
void for_each_shift_pair(const GridShape& g, bool reversed, Fn&& fn) {
  if (g.channels % 4 != 0) {
    throw ConfigError("spatial shift needs a channel count divisible by 4, got " + std::to_string(g.channels));
  }
  const std::size_t group = g.channels / 4;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t h = 0; h < g.height; ++h) {
      for (std::size_t w = 0; w < g.width; ++w) {
        const std::size_t dst = ((b * g.height + h) * g.width + w) * g.channels;
        for (std::size_t q = 0; q < 4; ++q) {
          // q: 0 = +width, 1 = -width, 2 = +height, 3 = -height
          const std::size_t dir = reversed ? (q ^ 1u) : q;
          std::size_t sh = h, sw = w;
          switch (dir) {
            case 0: sw = w > 0 ? w - 1 : w; break;
            case 1: sw = w + 1 < g.width ? w + 1 : w; break;
            case 2: sh = h > 0 ? h - 1 : h; break;
            default: sh = h + 1 < g.height ? h + 1 : h; break;
          }
          const std::size_t src = ((b * g.height + sh) * g.width + sw) * g.channels;
          for (std::size_t c = q * group; c < (q + 1) * group; ++c) fn(dst + c, src + c);
        }
      }
    }
  }
}

}  // namespace

DenseTensor spatial_shift(const DenseTensor& x, bool reversed) {
  const GridShape g = grid_shape(x);
  DenseTensor out(x.shape());
  for_each_shift_pair(g, reversed, [&](std::size_t dst, std::size_t src) { out[dst] = x[src]; });
  ledger::record(KernelKind::spatial_shift, 0, OpCensus{});
  return out;
}

DenseTensor spatial_shift_backward(const DenseTensor& dy, bool reversed) {
  const GridShape g = grid_shape(dy);
  DenseTensor dx(dy.shape());
  for_each_shift_pair(g, reversed, [&](std::size_t dst, std::size_t src) { dx[src] += dy[dst]; });
  return dx;
}

double cross_entropy_label_smoothed(const DenseTensor& logits, std::span<const std::size_t> targets,
                                    double smoothing, DenseTensor* grad) {
  require_matrix(logits, "cross_entropy");
  const std::size_t batch = logits.shape()[0], k = logits.shape()[1];
  if (targets.size() != batch) throw InputError("cross_entropy: target count does not match batch");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InputError("cross_entropy: smoothing must lie in [0, 1)");
  if (smoothing > 0.0 && k < 2) throw InputError("cross_entropy: label smoothing needs at least two classes");
  const double on = 1.0 - smoothing;
  const double off = k > 1 ? smoothing / static_cast<double>(k - 1) : 0.0;
  if (grad != nullptr) *grad = DenseTensor(logits.shape());
  std::vector<double> p(k);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= k) {
      throw InputError("cross_entropy: class index " + std::to_string(targets[b]) + " out of range for " +
                       std::to_string(k) + " classes");
    }
    const double* z = logits.raw() + b * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - zmax);
      denom += p[j];
    }
    const double lse = zmax + std::log(denom);
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double q = j == targets[b] ? on : off;
      row += q * (lse - z[j]);
      if (grad != nullptr) grad->raw()[b * k + j] = (p[j] / denom - q) / static_cast<double>(batch);
    }
    total += row;
  }
  OpCensus census;
  census[OpClass::compare] = batch * k;
  census[OpClass::other] = batch * (k + 1);  // exp and log
  census[OpClass::add] = batch * 3 * k;
  census[OpClass::multiply] = batch * k;
  census[OpClass::divide] = 1;
  ledger::record(KernelKind::cross_entropy, census.total(), census, /*auxiliary=*/true);
  const double loss = total / static_cast<double>(batch);
  if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
  return loss;
}

}  // namespace monet::kernels
