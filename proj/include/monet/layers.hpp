#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include "monet/autodiff.hpp"
#include "monet/error.hpp"
#include "monet/kernels.hpp"
#include "monet/ledger.hpp"
#include "monet/param.hpp"

namespace monet {

/// y = W x + b on the last axis; W is (out × in).
struct LinearParams {
  Param weight;
  Param bias;
};

struct ConvParams {
  Param weight;  // (cout, k, k, cin)
  Param bias;
  std::size_t stride = 1;
};

struct LayerNormParams {
  Param gamma;
  Param beta;
  double eps = 1e-6;
};

/// Mu-Layer: Y = C(u * v + u) + b4 with u = S(A X + b1), v = B S(D X + b2) + b3, where S is
/// the spatial shift when enabled and the identity otherwise. Tokens are rows of X.
///   A: m×d, D: l×d, B: m×l, C: o×m; b1: m, b2: l, b3: m, b4: o.
struct MuLayerParams {
  Param A, B, C, D;
  Param b1, b2, b3, b4;
  bool shift = false;

  std::size_t input_width() const { return A.value.shape()[1]; }
  std::size_t hidden() const { return A.value.shape()[0]; }
  std::size_t low_rank() const { return D.value.shape()[0]; }
  std::size_t output_width() const { return C.value.shape()[0]; }
};

/// Second layer of a Poly-Block: a Mu-Layer normally, a plain linear map for ablations.
using SecondLayer = std::variant<MuLayerParams, LinearParams>;

/// Two Mu-Layers with a layer norm between them and one residual around the whole block.
struct PolyBlockParams {
  MuLayerParams layer1;
  SecondLayer layer2;
  std::optional<LayerNormParams> norm;

  std::size_t width() const { return layer1.input_width(); }
};

/// Fine path: p×p patches then a 2×2 stride-2 reduction. Coarse path (optional): 2p×2p patches.
/// Both land on an (H/2p)×(W/2p)×c grid and are summed.
struct PyramidEmbedParams {
  ConvParams level0;
  ConvParams reduce;
  std::optional<ConvParams> level1;
  std::size_t patch = 1;

  std::size_t channels() const { return level0.weight.value.shape()[0]; }
};

// ---- construction (zero weights; ids assigned by the owner) ----

MuLayerParams make_mu_layer(std::size_t d, std::size_t m, std::size_t l, std::size_t o, bool shift);
LinearParams make_linear(std::size_t in, std::size_t out);
ConvParams make_conv(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride);
LayerNormParams make_layernorm(std::size_t width, double eps = 1e-6);
/// Block of width c with shrinkage ratio r (low rank c/r) and expansion ratio e (second hidden e·c).
PolyBlockParams make_poly_block(std::size_t c, std::size_t expansion, std::size_t shrinkage, bool use_norm,
                                bool linear_second_layer = false);
PyramidEmbedParams make_pyramid_embed(std::size_t in_channels, std::size_t c, std::size_t patch, bool level1);

// ---- parameter enumeration ----

template <class F>
void for_each_param(MuLayerParams& p, const std::string& prefix, F&& f) {
  f(prefix + "A", p.A);
  f(prefix + "b1", p.b1);
  f(prefix + "D", p.D);
  f(prefix + "b2", p.b2);
  f(prefix + "B", p.B);
  f(prefix + "b3", p.b3);
  f(prefix + "C", p.C);
  f(prefix + "b4", p.b4);
}

template <class F>
void for_each_param(LinearParams& p, const std::string& prefix, F&& f) {
  f(prefix + "weight", p.weight);
  f(prefix + "bias", p.bias);
}

template <class F>
void for_each_param(ConvParams& p, const std::string& prefix, F&& f) {
  f(prefix + "weight", p.weight);
  f(prefix + "bias", p.bias);
}

template <class F>
void for_each_param(LayerNormParams& p, const std::string& prefix, F&& f) {
  f(prefix + "gamma", p.gamma);
  f(prefix + "beta", p.beta);
}

template <class F>
void for_each_param(PolyBlockParams& p, const std::string& prefix, F&& f) {
  for_each_param(p.layer1, prefix + "layer1.", f);
  if (p.norm) for_each_param(*p.norm, prefix + "norm.", f);
  std::visit([&](auto& l2) { for_each_param(l2, prefix + "layer2.", f); }, p.layer2);
}

template <class F>
void for_each_param(PyramidEmbedParams& p, const std::string& prefix, F&& f) {
  for_each_param(p.level0, prefix + "level0.", f);
  for_each_param(p.reduce, prefix + "reduce.", f);
  if (p.level1) for_each_param(*p.level1, prefix + "level1.", f);
}

/// Gives every parameter reachable from `target` a fresh id starting at `next`; returns the next free id.
template <class T>
ParamId assign_ids(T& target, ParamId next = 0) {
  for_each_param(target, "", [&](const std::string&, Param& p) { p.id = next++; });
  return next;
}

// ---- initialization ----

/// Xavier normal: N(0, 2 / (fan_in + fan_out)). Matrices (out × in) and conv kernels
/// (cout, kh, kw, cin) use the usual receptive-field fans; biases are zeroed, norms reset to identity.
void xavier_normal(Param& weight, std::mt19937_64& rng);
void init_xavier_normal(MuLayerParams& p, std::mt19937_64& rng);
void init_xavier_normal(LinearParams& p, std::mt19937_64& rng);
void init_xavier_normal(ConvParams& p, std::mt19937_64& rng);
void init_xavier_normal(PolyBlockParams& p, std::mt19937_64& rng);
void init_xavier_normal(PyramidEmbedParams& p, std::mt19937_64& rng);

// ---- backends ----

/// Plain numeric evaluation on DenseTensor values.
class EvalBackend {
 public:
  using Value = DenseTensor;

  Value linear(const Value& x, const Param& w, const Param& b) { return kernels::linear(x, w.value, &b.value); }
  Value hadamard(const Value& a, const Value& b) { return kernels::hadamard(a, b); }
  Value add(const Value& a, const Value& b) { return kernels::add(a, b); }
  Value shift(const Value& x) { return kernels::spatial_shift(x); }
  Value layernorm(const Value& x, const LayerNormParams& n) {
    return kernels::layernorm(x, n.gamma.value, n.beta.value, n.eps);
  }
  Value conv2d(const Value& x, const ConvParams& c) {
    return kernels::conv2d(x, c.weight.value, &c.bias.value, c.stride);
  }
  Value avgpool(const Value& x) { return kernels::global_avgpool(x); }
  static const Shape& shape(const Value& x) { return x.shape(); }
};

/// Records every operation on an autodiff tape; parameters become trainable leaves.
class TapeBackend {
 public:
  using Value = ad::Var;

  explicit TapeBackend(ad::Tape& tape) : tape_(tape) {}

  Value input(DenseTensor x) { return tape_.constant(std::move(x)); }
  Value linear(const Value& x, const Param& w, const Param& b) {
    const Value bias = tape_.param(b);
    return tape_.linear(x, tape_.param(w), &bias);
  }
  Value hadamard(const Value& a, const Value& b) { return tape_.hadamard(a, b); }
  Value add(const Value& a, const Value& b) { return tape_.add(a, b); }
  Value shift(const Value& x) { return tape_.spatial_shift(x); }
  Value layernorm(const Value& x, const LayerNormParams& n) {
    return tape_.layernorm(x, tape_.param(n.gamma), tape_.param(n.beta), n.eps);
  }
  Value conv2d(const Value& x, const ConvParams& c) {
    const Value bias = tape_.param(c.bias);
    return tape_.conv2d(x, tape_.param(c.weight), &bias, c.stride);
  }
  Value avgpool(const Value& x) { return tape_.avgpool(x); }
  static const Shape& shape(const Value& x) { return x.shape(); }

  ad::Tape& tape() { return tape_; }

 private:
  ad::Tape& tape_;
};

// ---- forward passes, generic over the backend ----

template <class Be>
typename Be::Value mu_layer_forward(Be& be, const MuLayerParams& p, const typename Be::Value& x) {
  const Shape& s = Be::shape(x);
  if (s.empty() || s.back() != p.input_width()) {
    throw DimensionError("mu_layer: input " + shape_string(s) + " does not end in width " +
                         std::to_string(p.input_width()));
  }
  if (p.shift && s.size() != 4) {
    throw GeometryError("mu_layer: spatial shift needs a (batch, height, width, channels) grid, got " +
                        shape_string(s));
  }
  auto u = be.linear(x, p.A, p.b1);
  auto t = be.linear(x, p.D, p.b2);
  if (p.shift) {
    u = be.shift(u);
    t = be.shift(t);
  }
  auto v = be.linear(t, p.B, p.b3);
  auto h = be.add(be.hadamard(u, v), u);
  return be.linear(h, p.C, p.b4);
}

template <class Be>
typename Be::Value poly_block_forward(Be& be, const PolyBlockParams& p, const typename Be::Value& x) {
  const Shape& s = Be::shape(x);
  if (s.empty() || s.back() != p.width()) {
    throw DimensionError("poly_block: input " + shape_string(s) + " does not match block width " +
                         std::to_string(p.width()));
  }
  typename Be::Value z = [&] {
    ScopeLabel label("layer1");
    return mu_layer_forward(be, p.layer1, x);
  }();
  if (p.norm) {
    ScopeLabel label("norm");
    z = be.layernorm(z, *p.norm);
  }
  ScopeLabel label("layer2");
  auto y = std::visit(
      [&](const auto& l2) -> typename Be::Value {
        if constexpr (std::is_same_v<std::decay_t<decltype(l2)>, MuLayerParams>) {
          return mu_layer_forward(be, l2, z);
        } else {
          return be.linear(z, l2.weight, l2.bias);
        }
      },
      p.layer2);
  return be.add(y, x);
}

template <class Be>
typename Be::Value pyramid_embed_forward(Be& be, const PyramidEmbedParams& p, const typename Be::Value& image) {
  const Shape& s = Be::shape(image);
  if (s.size() != 4) throw DimensionError("pyramid_embed: expected (batch, H, W, C) images, got " + shape_string(s));
  const std::size_t cell = 2 * p.patch;
  if (s[1] % cell != 0 || s[2] % cell != 0) {
    throw ConfigError("pyramid_embed: image " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                      " is not divisible by 2p = " + std::to_string(cell));
  }
  typename Be::Value fine = [&] {
    ScopeLabel label("ppel");
    return be.conv2d(be.conv2d(image, p.level0), p.reduce);
  }();
  if (!p.level1) return fine;
  ScopeLabel label("ppel_level1");
  return be.add(fine, be.conv2d(image, *p.level1));
}

/// Per-token projection to k logits followed by average pooling; equal to W·avgpool(x) + b.
template <class Be>
typename Be::Value classifier_head(Be& be, const LinearParams& head, const typename Be::Value& x) {
  ScopeLabel label("head");
  return be.avgpool(be.linear(x, head.weight, head.bias));
}

}  // namespace monet
