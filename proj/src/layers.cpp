#include "monet/layers.hpp"

#include <cmath>

namespace monet {

namespace {

Param zeros(Shape shape) { return Param{0, DenseTensor(std::move(shape))}; }

void require_positive(std::initializer_list<std::size_t> extents, const char* what) {
  for (std::size_t e : extents) {
    if (e == 0) throw ConfigError(std::string(what) + ": extents must be positive");
  }
}

}  // namespace

MuLayerParams make_mu_layer(std::size_t d, std::size_t m, std::size_t l, std::size_t o, bool shift) {
  require_positive({d, m, l, o}, "mu_layer");
  MuLayerParams p;
  p.A = zeros({m, d});
  p.B = zeros({m, l});
  p.C = zeros({o, m});
  p.D = zeros({l, d});
  p.b1 = zeros({m});
  p.b2 = zeros({l});
  p.b3 = zeros({m});
  p.b4 = zeros({o});
  p.shift = shift;
  return p;
}

LinearParams make_linear(std::size_t in, std::size_t out) {
  require_positive({in, out}, "linear");
  return LinearParams{zeros({out, in}), zeros({out})};
}

ConvParams make_conv(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride) {
  require_positive({cin, cout, kernel, stride}, "conv");
  return ConvParams{zeros({cout, kernel, kernel, cin}), zeros({cout}), stride};
}

LayerNormParams make_layernorm(std::size_t width, double eps) {
  require_positive({width}, "layernorm");
  return LayerNormParams{Param{0, DenseTensor(Shape{width}, 1.0)}, zeros({width}), eps};
}

PolyBlockParams make_poly_block(std::size_t c, std::size_t expansion, std::size_t shrinkage, bool use_norm,
                                bool linear_second_layer) {
  require_positive({c, expansion, shrinkage}, "poly_block");
  if (c % shrinkage != 0) {
    throw ConfigError("poly_block: width " + std::to_string(c) + " not divisible by shrinkage " +
                      std::to_string(shrinkage));
  }
  PolyBlockParams p;
  p.layer1 = make_mu_layer(c, c, c / shrinkage, c, /*shift=*/true);
  if (linear_second_layer) {
    p.layer2 = make_linear(c, c);
  } else {
    const std::size_t hidden = expansion * c;
    p.layer2 = make_mu_layer(c, hidden, hidden / shrinkage, c, /*shift=*/false);
  }
  if (use_norm) p.norm = make_layernorm(c);
  return p;
}

PyramidEmbedParams make_pyramid_embed(std::size_t in_channels, std::size_t c, std::size_t patch, bool level1) {
  PyramidEmbedParams p;
  p.patch = patch;
  p.level0 = make_conv(in_channels, c, patch, patch);
  p.reduce = make_conv(c, c, 2, 2);
  if (level1) p.level1 = make_conv(in_channels, c, 2 * patch, 2 * patch);
  return p;
}

void xavier_normal(Param& weight, std::mt19937_64& rng) {
  const Shape& s = weight.value.shape();
  double fan_in = 0.0, fan_out = 0.0;
  if (s.size() == 2) {
    fan_out = static_cast<double>(s[0]);
    fan_in = static_cast<double>(s[1]);
  } else if (s.size() == 4) {
    const double receptive = static_cast<double>(s[1] * s[2]);
    fan_out = static_cast<double>(s[0]) * receptive;
    fan_in = static_cast<double>(s[3]) * receptive;
  } else {
    throw DimensionError("xavier_normal: unsupported weight shape " + shape_string(s));
  }
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
  for (double& v : weight.value.data()) v = dist(rng);
}

void init_xavier_normal(MuLayerParams& p, std::mt19937_64& rng) {
  for (Param* w : {&p.A, &p.D, &p.B, &p.C}) xavier_normal(*w, rng);
  for (Param* b : {&p.b1, &p.b2, &p.b3, &p.b4}) b->value.fill(0.0);
}

void init_xavier_normal(LinearParams& p, std::mt19937_64& rng) {
  xavier_normal(p.weight, rng);
  p.bias.value.fill(0.0);
}

void init_xavier_normal(ConvParams& p, std::mt19937_64& rng) {
  xavier_normal(p.weight, rng);
  p.bias.value.fill(0.0);
}

void init_xavier_normal(PolyBlockParams& p, std::mt19937_64& rng) {
  init_xavier_normal(p.layer1, rng);
  std::visit([&](auto& l2) { init_xavier_normal(l2, rng); }, p.layer2);
  if (p.norm) {
    p.norm->gamma.value.fill(1.0);
    p.norm->beta.value.fill(0.0);
  }
}

void init_xavier_normal(PyramidEmbedParams& p, std::mt19937_64& rng) {
  init_xavier_normal(p.level0, rng);
  init_xavier_normal(p.reduce, rng);
  if (p.level1) init_xavier_normal(*p.level1, rng);
}

}  // namespace monet
