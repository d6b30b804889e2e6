#include <doctest.h>

#include "monet/polyoracle.hpp"
#include "oracles.hpp"

using namespace monet;
using namespace monet::poly;

namespace {

RationalPoly random_quadratic(std::mt19937_64& rng, std::size_t nvars) {
  std::uniform_int_distribution<int> num(-9, 9), den(1, 7);
  RationalPoly p(nvars);
  for (std::size_t i = 0; i < nvars; ++i)
    for (std::size_t j = i; j < nvars; ++j) {
      Exponents e(nvars, 0);
      e[i] += 1;
      e[j] += 1;
      p.add_term(e, mpq_class(num(rng), den(rng)));
    }
  for (std::size_t i = 0; i < nvars; ++i) {
    Exponents e(nvars, 0);
    e[i] = 1;
    p.add_term(e, mpq_class(num(rng), den(rng)));
  }
  p.add_term(Exponents(nvars, 0), mpq_class(num(rng), den(rng)));
  return p;
}

}  // namespace

TEST_CASE("ring basics") {
  RationalPoly x = RationalPoly::variable(1, 0), one = RationalPoly::constant(1, 1);
  RationalPoly prod = (x + one) * (x - one);
  RationalPoly expected(1);
  expected.add_term({2}, 1);
  expected.add_term({0}, -1);
  CHECK(prod == expected);
  CHECK(prod.degree() == 2);
  CHECK((prod + RationalPoly(1)) == prod);
  CHECK((prod - prod).is_zero());
  CHECK_THROWS_AS(RationalPoly::variable(2, 2), InputError);
  CHECK_THROWS_AS(RationalPoly(2) + RationalPoly(3), DimensionError);
}

TEST_CASE("evaluation is a ring homomorphism (exact)") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> num(-20, 20), den(1, 9);
  for (int trial = 0; trial < 5; ++trial) {
    RationalPoly p = random_quadratic(rng, 3), q = random_quadratic(rng, 3);
    RationalPoly pq = p * q, sum = p + q;
    CHECK(pq.degree() == 4);
    for (int k = 0; k < 10; ++k) {
      std::vector<mpq_class> pt{mpq_class(num(rng), den(rng)), mpq_class(num(rng), den(rng)),
                                mpq_class(num(rng), den(rng))};
      for (auto& v : pt) v.canonicalize();
      CHECK(pq.evaluate(pt) == p.evaluate(pt) * q.evaluate(pt));
      CHECK(sum.evaluate(pt) == p.evaluate(pt) + q.evaluate(pt));
    }
  }
}

TEST_CASE("symbolic Mu-Layer coefficients match the expanded formula") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    MuLayerParams p = make_mu_layer(2, 2, 1, 1, false);
    randomize_integer(p, rng, 4);
    for (Param* b : {&p.b1, &p.b2, &p.b3, &p.b4}) b->value.fill(0);
    auto out = symbolic_forward(p, PolyTensor<mpq_class>::variables({1, 2}));
    const auto& y = out.elements.at(0);
    auto A = [&](int j, int t) { return p.A.value[j * 2 + t]; };
    auto C = [&](int j) { return p.C.value[j]; };
    auto B = [&](int j) { return p.B.value[j]; };
    auto D = [&](int t) { return p.D.value[t]; };
    double x11 = 0, x12 = 0, x22 = 0, x1 = 0, x2 = 0;
    for (int j = 0; j < 2; ++j) {
      x11 += C(j) * A(j, 0) * B(j) * D(0);
      x22 += C(j) * A(j, 1) * B(j) * D(1);
      x12 += C(j) * B(j) * (A(j, 0) * D(1) + A(j, 1) * D(0));
      x1 += C(j) * A(j, 0);
      x2 += C(j) * A(j, 1);
    }
    CHECK(y.coefficient({2, 0}) == x11);
    CHECK(y.coefficient({1, 1}) == x12);
    CHECK(y.coefficient({0, 2}) == x22);
    CHECK(y.coefficient({1, 0}) == x1);
    CHECK(y.coefficient({0, 1}) == x2);
    CHECK(y.coefficient({0, 0}) == 0);
    std::size_t expected_terms = 0;
    for (double c : {x11, x12, x22, x1, x2}) expected_terms += c != 0;
    CHECK(y.term_count() == expected_terms);
  }
}

TEST_CASE("zero and unit Mu-Layers") {
  MuLayerParams z = make_mu_layer(3, 2, 2, 2, false);
  auto out = symbolic_forward(z, PolyTensor<mpq_class>::variables({2, 3}));
  for (const auto& e : out.elements) CHECK(e.is_zero());

  MuLayerParams u = make_mu_layer(1, 1, 1, 1, false);
  for (Param* q : {&u.A, &u.B, &u.C, &u.D}) q->value.fill(1);
  auto y = symbolic_forward(u, PolyTensor<mpq_class>::variables({1, 1}));
  RationalPoly expected(1);
  expected.add_term({2}, 1);
  expected.add_term({1}, 1);
  CHECK(y.elements[0] == expected);
  CHECK(y.elements[0].to_string().find("x0^2") != std::string::npos);
}

TEST_CASE("degree verdicts") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    DegreeExperiment mu;
    mu.target = DegreeTarget::mu_layer;
    mu.channels = 2;
    mu.seed = seed;
    DegreeVerdict v = run_degree_experiment(mu);
    CHECK(v.max_degree == 2);
    CHECK(v.cross_term_found);
    CHECK(v.pass);

    DegreeExperiment blk;
    blk.seed = seed;
    blk.grid = 2;
    v = run_degree_experiment(blk);
    CHECK(v.max_degree == 4);
    CHECK(v.pass);

    blk.linear_second_layer = true;
    v = run_degree_experiment(blk);
    CHECK(v.max_degree == 2);
    CHECK(v.pass);
  }
  DegreeExperiment stack;
  stack.target = DegreeTarget::stack;
  stack.blocks = 2;
  DegreeVerdict v = run_degree_experiment(stack);
  CHECK(v.max_degree == 16);
  CHECK(v.pass);
  CHECK(expected_degree(stack) == 16);
  CHECK(parse_degree_target("mu") == DegreeTarget::mu_layer);
  CHECK_THROWS_AS(parse_degree_target("layer9"), InputError);
}

TEST_CASE("verify_degree flags a missing cross term") {
  // y = x0^2 + x1^2 has no product of distinct channels
  PolyTensor<mpq_class> t = PolyTensor<mpq_class>::zeros({1}, 2);
  t.elements[0].add_term({2, 0}, 1);
  t.elements[0].add_term({0, 2}, 1);
  DegreeVerdict v = verify_degree(t, 2, 2, true);
  CHECK(v.max_degree == 2);
  CHECK_FALSE(v.cross_term_found);
  CHECK_FALSE(v.pass);
  // with one channel per token, x0*x1 crosses tokens and does not count
  PolyTensor<mpq_class> u = PolyTensor<mpq_class>::zeros({1}, 2);
  u.elements[0].add_term({1, 1}, 3);
  CHECK_FALSE(verify_degree(u, 1, 2, true).cross_term_found);
  CHECK(verify_degree(u, 2, 2, true).cross_term_found);
}

TEST_CASE("term cap raises CapacityError") {
  std::mt19937_64 rng(1);
  PolyBlockParams b = make_poly_block(4, 1, 1, false);
  randomize_integer(b, rng, 3);
  SymbolicOptions o;
  o.term_cap = 20;
  CHECK_THROWS_AS(symbolic_forward(b, PolyTensor<mpq_class>::variables({1, 2, 2, 4}), o), CapacityError);
}

TEST_CASE("symbolic evaluation agrees with the numeric forward") {
  std::mt19937_64 rng(14);
  EvalBackend be;

  SUBCASE("f64 coefficients, random real weights") {
    PolyBlockParams b = make_poly_block(4, 2, 1, false);
    for_each_param(b, "", [&](const std::string&, Param& p) { p.value = oracle::random(p.value.shape(), rng, 0.5); });
    auto sym = symbolic_forward(b, PolyTensor<double>::variables({1, 2, 2, 4}));
    for (int k = 0; k < 3; ++k) {
      DenseTensor x = oracle::random({1, 2, 2, 4}, rng);
      std::vector<double> pt(x.data().begin(), x.data().end());
      auto vals = sym.evaluate(pt);
      DenseTensor y = poly_block_forward(be, b, x);
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(vals[i] - y[i]) < 1e-9 * std::max(1.0, std::abs(y[i])));
    }
  }

  SUBCASE("rational coefficients, integer weights and inputs are exact") {
    PolyBlockParams b = make_poly_block(4, 1, 1, false);
    randomize_integer(b, rng, 2);
    auto sym = symbolic_forward(b, PolyTensor<mpq_class>::variables({1, 2, 2, 4}));
    std::uniform_int_distribution<int> d(-2, 2);
    DenseTensor x({1, 2, 2, 4});
    std::vector<mpq_class> pt;
    for (double& v : x.data()) {
      v = d(rng);
      pt.emplace_back(v);
    }
    auto vals = sym.evaluate(pt);
    DenseTensor y = poly_block_forward(be, b, x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(vals[i] == mpq_class(y[i]));
  }

  SUBCASE("whole model with norms disabled") {
    ModelConfig c;
    c.depth = 1;
    c.hidden = 4;
    c.expansion = 1;
    c.shrinkage = 1;
    c.patch_size = 1;
    c.num_classes = 2;
    c.image_height = c.image_width = 2;
    c.in_channels = 1;
    c.use_norm = false;
    MonetModel m = build(c, 3);
    auto sym = symbolic_forward(m, PolyTensor<double>::variables({1, 2, 2, 1}));
    CHECK(sym.max_degree() == 4);
    DenseTensor x = oracle::random({1, 2, 2, 1}, rng);
    std::vector<double> pt(x.data().begin(), x.data().end());
    auto vals = sym.evaluate(pt);
    DenseTensor y = forward(m, x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(vals[i] - y[i]) < 1e-9);
  }
}

TEST_CASE("a Mu-Layer at most doubles the input degree") {
  std::mt19937_64 rng(15);
  MuLayerParams first = make_mu_layer(2, 2, 1, 2, false), second = make_mu_layer(2, 2, 1, 2, false);
  randomize_integer(first, rng, 3);
  randomize_integer(second, rng, 3);
  auto in = symbolic_forward(first, PolyTensor<mpq_class>::variables({1, 2}));
  auto out = symbolic_forward(second, in);
  CHECK(in.max_degree() == 2);
  CHECK(out.max_degree() <= 2 * in.max_degree());
}
