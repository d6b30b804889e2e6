#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "monet/tensor.hpp"

/// Dense numeric kernels. Forward kernels report to the active FlopLedger (one FLOP per
/// multiply-accumulate; Hadamard products count one per element; adds are free).
namespace monet::kernels {

/// Geometry of a (batch, height, width, channels) token grid.
struct GridShape {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t tokens() const noexcept { return height * width; }
};

/// Validates rank 4 and returns the grid geometry.
GridShape grid_shape(const DenseTensor& t);

// p×q · q×r
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
// p×q · (r×q)ᵀ
DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b);
// (q×p)ᵀ · q×r
DenseTensor matmul_tn(const DenseTensor& a, const DenseTensor& b);

/// Applies w (m×d) to the last axis of x (..., d) and adds the optional bias (m).
DenseTensor linear(const DenseTensor& x, const DenseTensor& w, const DenseTensor* bias);
void linear_backward(const DenseTensor& x, const DenseTensor& w, const DenseTensor& dy, DenseTensor* dx,
                     DenseTensor* dw, DenseTensor* dbias);

DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b);
DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor sub(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& a, double alpha);

/// acc += x (shapes must match). Not reported to the ledger.
void accumulate(DenseTensor& acc, const DenseTensor& x);
/// acc += alpha * x. Not reported to the ledger.
void accumulate_scaled(DenseTensor& acc, const DenseTensor& x, double alpha);

struct LayerNormStats {
  std::vector<double> mean;
  std::vector<double> rstd;
};

/// Normalizes each row of the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.
DenseTensor layernorm(const DenseTensor& x, const DenseTensor& gamma, const DenseTensor& beta, double eps,
                      LayerNormStats* stats = nullptr);
void layernorm_backward(const DenseTensor& x, const DenseTensor& gamma, const LayerNormStats& stats,
                        const DenseTensor& dy, DenseTensor& dx, DenseTensor& dgamma, DenseTensor& dbeta);

/// Valid convolution over a (batch, H, W, Cin) grid with weights (Cout, kh, kw, Cin).
DenseTensor conv2d(const DenseTensor& x, const DenseTensor& w, const DenseTensor* bias, std::size_t stride);
void conv2d_backward(const DenseTensor& x, const DenseTensor& w, std::size_t stride, const DenseTensor& dy,
                     DenseTensor* dx, DenseTensor* dw, DenseTensor* dbias);

/// Mean over all token positions: (batch, H, W, C) -> (batch, C).
DenseTensor global_avgpool(const DenseTensor& x);
DenseTensor global_avgpool_backward(const DenseTensor& dy, const GridShape& grid);

/// Four channel groups moved one token along +width, -width, +height, -height. The vacated
/// border line keeps its pre-shift values. `reversed` swaps each group's direction.
DenseTensor spatial_shift(const DenseTensor& x, bool reversed = false);
/// Adjoint of spatial_shift (scatter-add of the gradient back onto the sources).
DenseTensor spatial_shift_backward(const DenseTensor& dy, bool reversed = false);

/// Mean softmax cross-entropy against one-hot targets smoothed to (1 - s) on the target and
/// s / (k - 1) elsewhere. Writes d loss / d logits when `grad` is non-null.
double cross_entropy_label_smoothed(const DenseTensor& logits, std::span<const std::size_t> targets,
                                    double smoothing, DenseTensor* grad = nullptr);

}  // namespace monet::kernels
