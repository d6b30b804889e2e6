#include <doctest.h>

#include "monet/layers.hpp"
#include "oracles.hpp"

using namespace monet;

namespace {

void randomize(MuLayerParams& p, std::mt19937_64& rng, bool biases) {
  for_each_param(p, "", [&](const std::string& name, Param& q) {
    if (!biases && name[0] == 'b') return;
    q.value = oracle::random(q.value.shape(), rng);
  });
}

/// Scalar-loop Mu-Layer on one token, no shift.
std::vector<double> mu_token(const MuLayerParams& p, const std::vector<double>& x) {
  const std::size_t d = p.input_width(), m = p.hidden(), l = p.low_rank(), o = p.output_width();
  std::vector<double> u(m), t(l), v(m), y(o);
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = p.b1.value[i];
    for (std::size_t j = 0; j < d; ++j) u[i] += p.A.value[i * d + j] * x[j];
  }
  for (std::size_t i = 0; i < l; ++i) {
    t[i] = p.b2.value[i];
    for (std::size_t j = 0; j < d; ++j) t[i] += p.D.value[i * d + j] * x[j];
  }
  for (std::size_t i = 0; i < m; ++i) {
    v[i] = p.b3.value[i];
    for (std::size_t j = 0; j < l; ++j) v[i] += p.B.value[i * l + j] * t[j];
  }
  for (std::size_t i = 0; i < o; ++i) {
    y[i] = p.b4.value[i];
    for (std::size_t j = 0; j < m; ++j) y[i] += p.C.value[i * m + j] * (u[j] * v[j] + u[j]);
  }
  return y;
}

}  // namespace

TEST_CASE("Mu-Layer with zero weights is zero") {
  EvalBackend be;
  MuLayerParams p = make_mu_layer(3, 4, 2, 5, false);
  std::mt19937_64 rng(1);
  DenseTensor y = mu_layer_forward(be, p, oracle::random({6, 3}, rng));
  CHECK(y.shape() == Shape{6, 5});
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("scalar Mu-Layer is x^2 + x") {
  EvalBackend be;
  MuLayerParams p = make_mu_layer(1, 1, 1, 1, false);
  p.A.value.fill(1);
  p.B.value.fill(1);
  p.C.value.fill(1);
  p.D.value.fill(1);
  for (double x : {-2.0, 0.0, 0.5, 3.0}) CHECK(mu_layer_forward(be, p, DenseTensor({1, 1}, x))[0] == x * x + x);
}

TEST_CASE("Mu-Layer matches the elementwise expansion exactly") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> w(-5, 5);
  MuLayerParams p = make_mu_layer(2, 2, 1, 1, false);
  for (Param* q : {&p.A, &p.B, &p.C, &p.D})
    for (double& v : q->value.data()) v = w(rng);
  const double x1 = w(rng), x2 = w(rng);
  // y = Σ_j C_j ((A x)_j · B_j (D x) + (A x)_j)
  double expected = 0;
  const double dx = p.D.value[0] * x1 + p.D.value[1] * x2;
  for (std::size_t j = 0; j < 2; ++j) {
    const double ax = p.A.value[j * 2] * x1 + p.A.value[j * 2 + 1] * x2;
    expected += p.C.value[j] * (ax * p.B.value[j] * dx + ax);
  }
  EvalBackend be;
  CHECK(mu_layer_forward(be, p, DenseTensor({1, 2}, std::vector<double>{x1, x2}))[0] == expected);
}

TEST_CASE("Mu-Layer homogeneity decomposition") {
  std::mt19937_64 rng(3);
  MuLayerParams p = make_mu_layer(4, 6, 3, 5, false);
  randomize(p, rng, false);
  EvalBackend be;
  DenseTensor x = oracle::random({7, 4}, rng);
  auto at = [&](double t) { return mu_layer_forward(be, p, kernels::scale(x, t)); };
  DenseTensor y1 = at(1), y2 = at(2), y3 = at(3);
  // y1 = Q + L, y2 = 4Q + 2L  =>  Q = (y2 - 2 y1) / 2, L = y1 - Q
  for (std::size_t i = 0; i < y1.size(); ++i) {
    const double q = (y2[i] - 2 * y1[i]) / 2, l = y1[i] - q;
    CHECK(std::abs(9 * q + 3 * l - y3[i]) < 1e-9);
  }
}

TEST_CASE("shifted Mu-Layer applies the shift to both branches") {
  std::mt19937_64 rng(4);
  MuLayerParams p = make_mu_layer(4, 8, 4, 4, true);
  randomize(p, rng, true);
  DenseTensor x = oracle::random({1, 3, 3, 4}, rng);
  EvalBackend be;
  DenseTensor y = mu_layer_forward(be, p, x);
  DenseTensor u = oracle::shift(oracle::linear(x, p.A.value, &p.b1.value));
  DenseTensor t = oracle::shift(oracle::linear(x, p.D.value, &p.b2.value));
  DenseTensor v = oracle::linear(t, p.B.value, &p.b3.value);
  DenseTensor h = u;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = u[i] * v[i] + u[i];
  CHECK(oracle::max_abs_diff(y, oracle::linear(h, p.C.value, &p.b4.value)) < 1e-12);
  CHECK_THROWS_AS(mu_layer_forward(be, p, DenseTensor({9, 4})), GeometryError);
  CHECK_THROWS_AS(mu_layer_forward(be, p, DenseTensor({1, 3, 3, 5})), DimensionError);
}

TEST_CASE("zero-weight Poly-Block is the identity") {
  std::mt19937_64 rng(5);
  PolyBlockParams b = make_poly_block(16, 3, 4, true);
  EvalBackend be;
  DenseTensor x = oracle::random({2, 3, 3, 16}, rng);
  CHECK(poly_block_forward(be, b, x) == x);
  PolyBlockParams lin = make_poly_block(16, 3, 4, false, true);
  CHECK(poly_block_forward(be, lin, x) == x);
}

TEST_CASE("single-token Poly-Block matches a scalar loop") {
  std::mt19937_64 rng(6);
  PolyBlockParams b = make_poly_block(4, 1, 1, true);
  randomize(b.layer1, rng, true);
  randomize(std::get<MuLayerParams>(b.layer2), rng, true);
  b.norm->gamma.value = oracle::random({4}, rng);
  b.norm->beta.value = oracle::random({4}, rng);
  b.norm->eps = 1e-6;
  DenseTensor x = oracle::random({1, 1, 1, 4}, rng);
  std::vector<double> tok(x.data().begin(), x.data().end());
  // a 1×1 grid shifts to itself
  std::vector<double> z = mu_token(b.layer1, tok);
  double mean = 0, var = 0;
  for (double v : z) mean += v;
  mean /= 4;
  for (double v : z) var += (v - mean) * (v - mean);
  var /= 4;
  for (std::size_t i = 0; i < 4; ++i)
    z[i] = (z[i] - mean) / std::sqrt(var + 1e-6) * b.norm->gamma.value[i] + b.norm->beta.value[i];
  std::vector<double> out = mu_token(std::get<MuLayerParams>(b.layer2), z);
  EvalBackend be;
  DenseTensor y = poly_block_forward(be, b, x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - (out[i] + tok[i])) < 1e-12);
}

TEST_CASE("Poly-Block widths") {
  PolyBlockParams b = make_poly_block(16, 3, 4, true);
  CHECK(b.layer1.hidden() == 16);
  CHECK(b.layer1.low_rank() == 4);
  CHECK(b.layer1.shift);
  const auto& l2 = std::get<MuLayerParams>(b.layer2);
  CHECK(l2.hidden() == 48);
  CHECK(l2.low_rank() == 12);
  CHECK_FALSE(l2.shift);
  CHECK(l2.output_width() == 16);
}

TEST_CASE("pyramid embedding") {
  std::mt19937_64 rng(7);
  EvalBackend be;
  PyramidEmbedParams zero = make_pyramid_embed(3, 8, 2, true);
  DenseTensor out = pyramid_embed_forward(be, zero, DenseTensor({1, 8, 8, 3}));
  CHECK(out.shape() == Shape{1, 2, 2, 8});
  for (double v : out.data()) CHECK(v == 0.0);

  PyramidEmbedParams p = make_pyramid_embed(3, 8, 7, true);
  for_each_param(p, "", [&](const std::string&, Param& q) { q.value = oracle::random(q.value.shape(), rng); });
  DenseTensor img = oracle::random({1, 28, 28, 3}, rng);
  DenseTensor fine = oracle::conv_im2col(oracle::conv_im2col(img, p.level0.weight.value, p.level0.bias.value, 7),
                                         p.reduce.weight.value, p.reduce.bias.value, 2);
  DenseTensor coarse = oracle::conv_im2col(img, p.level1->weight.value, p.level1->bias.value, 14);
  DenseTensor ref = fine;
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += coarse[i];
  DenseTensor got = pyramid_embed_forward(be, p, img);
  CHECK(got.shape() == Shape{1, 2, 2, 8});
  CHECK(oracle::max_abs_diff(got, ref) < 1e-12);

  // coarse path zeroed gives the one-level embedding exactly
  p.level1->weight.value.fill(0);
  p.level1->bias.value.fill(0);
  PyramidEmbedParams one = p;
  one.level1.reset();
  CHECK(pyramid_embed_forward(be, p, img) == pyramid_embed_forward(be, one, img));

  CHECK_THROWS_AS(pyramid_embed_forward(be, p, DenseTensor({1, 20, 20, 3})), ConfigError);
}

TEST_CASE("classifier head") {
  std::mt19937_64 rng(8);
  EvalBackend be;
  LinearParams h = make_linear(5, 3);
  h.bias.value = DenseTensor::vector({1, -2, 3});
  DenseTensor logits = classifier_head(be, h, oracle::random({2, 3, 3, 5}, rng));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 3; ++k) CHECK(logits[b * 3 + k] == h.bias.value[k]);

  LinearParams id = make_linear(3, 3);
  for (std::size_t i = 0; i < 3; ++i) id.weight.value[i * 4] = 1.0;
  DenseTensor tok = oracle::random({1, 1, 1, 3}, rng);
  DenseTensor l2 = classifier_head(be, id, tok);
  for (std::size_t i = 0; i < 3; ++i) CHECK(l2[i] == tok[i]);

  LinearParams r = make_linear(6, 4);
  r.weight.value = oracle::random({4, 6}, rng);
  r.bias.value = oracle::random({4}, rng);
  DenseTensor x = oracle::random({3, 2, 5, 6}, rng);
  DenseTensor pooled({3, 6});
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t c = 0; c < 6; ++c) {
      double s = 0;
      for (std::size_t t = 0; t < 10; ++t) s += x[(b * 10 + t) * 6 + c];
      pooled[b * 6 + c] = s / 10;
    }
  CHECK(oracle::max_abs_diff(classifier_head(be, r, x), oracle::linear(pooled, r.weight.value, &r.bias.value)) < 1e-12);
}

TEST_CASE("Xavier initialization") {
  std::mt19937_64 a(42), b(42);
  PolyBlockParams x = make_poly_block(16, 3, 4, true), y = make_poly_block(16, 3, 4, true);
  init_xavier_normal(x, a);
  init_xavier_normal(y, b);
  CHECK(x.layer1.A.value == y.layer1.A.value);
  CHECK(std::get<MuLayerParams>(x.layer2).C.value == std::get<MuLayerParams>(y.layer2).C.value);

  std::mt19937_64 rng(1);
  Param big{0, DenseTensor({1000, 1000})};
  xavier_normal(big, rng);
  double mean = 0, var = 0;
  for (double v : big.value.data()) mean += v;
  mean /= 1e6;
  for (double v : big.value.data()) var += (v - mean) * (v - mean);
  var /= 1e6 - 1;
  CHECK(std::abs(var - 2.0 / 2000) < 0.1 * 2.0 / 2000);

  Param unit{0, DenseTensor({1, 1})};
  double s2 = 0;
  for (int i = 0; i < 20000; ++i) {
    xavier_normal(unit, rng);
    s2 += unit.value[0] * unit.value[0];
  }
  CHECK(std::abs(s2 / 20000 - 1.0) < 0.05);
}
