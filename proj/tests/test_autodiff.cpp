#include <doctest.h>

#include "monet/autodiff.hpp"
#include "monet/error.hpp"
#include "monet/gradcheck.hpp"
#include "monet/layers.hpp"
#include "oracles.hpp"

using namespace monet;
using ad::Tape;
using ad::Var;

TEST_CASE("gradient of x*x") {
  Tape tape;
  Var x = tape.leaf(0, DenseTensor::scalar(3.0));
  Var y = tape.hadamard(x, x);
  auto g = tape.backward(y);
  CHECK(g.at(0).item() == 6.0);
}

TEST_CASE("gradient of sum(A X) is the ones-times-X-transpose pattern") {
  std::mt19937_64 rng(1);
  DenseTensor A = oracle::random({3, 4}, rng), X = oracle::random({4, 5}, rng);
  Tape tape;
  Var a = tape.leaf(0, A);
  Var x = tape.leaf(1, X);
  auto g = tape.backward(tape.sum(tape.matmul(a, x)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double rowsum = 0;
      for (std::size_t c = 0; c < 5; ++c) rowsum += X[j * 5 + c];
      CHECK(std::abs(g.at(0)[i * 4 + j] - rowsum) < 1e-12);
    }
}

TEST_CASE("a parameter used twice maps to one node and accumulates") {
  Param p{7, DenseTensor::vector({2.0, -1.0})};
  Tape tape;
  Var a = tape.param(p);
  Var b = tape.param(p);
  CHECK(a.id == b.id);
  auto g = tape.backward(tape.sum(tape.add(a, b)));
  CHECK(g.at(7) == DenseTensor::vector({2.0, 2.0}));
}

TEST_CASE("backward of a non-scalar is rejected") {
  Tape tape;
  Var x = tape.leaf(0, DenseTensor({2}, 1.0));
  CHECK_THROWS_AS(tape.backward(x), InputError);
}

namespace {

/// Central differences computed directly in the test, independent of finite_difference_check.
double fd(const std::function<double()>& f, double& coord, double h = 1e-5) {
  const double keep = coord;
  coord = keep + h;
  const double up = f();
  coord = keep - h;
  const double down = f();
  coord = keep;
  return (up - down) / (2 * h);
}

}  // namespace

TEST_CASE("linear function gradients are exact") {
  std::mt19937_64 rng(2);
  Param w{0, oracle::random({3, 4}, rng)}, b{1, oracle::random({3}, rng)};
  DenseTensor x = oracle::random({5, 4}, rng), r = oracle::random({5, 3}, rng);
  auto value = [&] {
    DenseTensor y = oracle::linear(x, w.value, &b.value);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  Tape tape;
  Var wb = tape.param(b);
  Var out = tape.linear(tape.constant(x), tape.param(w), &wb);
  auto g = tape.backward(tape.sum(tape.hadamard(out, tape.constant(r))));
  for (std::size_t i = 0; i < w.value.size(); ++i) CHECK(std::abs(g.at(0)[i] - fd(value, w.value[i])) < 1e-9);
  for (std::size_t i = 0; i < b.value.size(); ++i) CHECK(std::abs(g.at(1)[i] - fd(value, b.value[i])) < 1e-9);
}

TEST_CASE("hadamard bilinear form") {
  std::mt19937_64 rng(3);
  Param a{0, oracle::random({6}, rng)}, b{1, oracle::random({6}, rng)};
  auto value = [&] {
    double s = 0;
    for (std::size_t i = 0; i < 6; ++i) s += a.value[i] * b.value[i] * (i + 1.0);
    return s;
  };
  DenseTensor weights({6});
  for (std::size_t i = 0; i < 6; ++i) weights[i] = i + 1.0;
  Tape tape;
  auto g = tape.backward(tape.sum(tape.hadamard(tape.hadamard(tape.param(a), tape.param(b)), tape.constant(weights))));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(g.at(0)[i] - fd(value, a.value[i])) < 1e-6);
    CHECK(std::abs(g.at(1)[i] - fd(value, b.value[i])) < 1e-6);
  }
}

TEST_CASE("Mu-Layer and Poly-Block gradients against finite differences") {
  std::mt19937_64 rng(4);
  PolyBlockParams block = make_poly_block(8, 2, 2, true);
  assign_ids(block);
  init_xavier_normal(block, rng);
  for_each_param(block, "", [&](const std::string&, Param& p) {
    for (double& v : p.value.data()) v += 0.1 * std::normal_distribution<double>()(rng);
  });
  DenseTensor x = oracle::random({1, 3, 3, 8}, rng);
  DenseTensor r = oracle::random({1, 3, 3, 8}, rng);

  std::vector<Param*> params;
  for_each_param(block, "", [&](const std::string&, Param& p) { params.push_back(&p); });

  SUBCASE("Mu-Layer, 20 coordinates at 1e-5") {
    ad::LossBuilder loss = [&](Tape& t) {
      TapeBackend be(t);
      return t.sum(t.hadamard(mu_layer_forward(be, block.layer1, be.input(x)), t.constant(r)));
    };
    std::vector<Param*> mu;
    for_each_param(block.layer1, "", [&](const std::string&, Param& p) { mu.push_back(&p); });
    ad::FdOptions opt;
    opt.max_coordinates = 20;
    opt.seed = 5;
    auto rep = ad::finite_difference_check(loss, mu, opt);
    CHECK(rep.coordinates.size() == 20);
    CHECK(rep.pass);
    CHECK(rep.max_rel_error < 1e-5);
  }

  SUBCASE("Poly-Block with layer norm at 1e-4") {
    ad::LossBuilder loss = [&](Tape& t) {
      TapeBackend be(t);
      return t.sum(t.hadamard(poly_block_forward(be, block, be.input(x)), t.constant(r)));
    };
    ad::FdOptions opt;
    opt.tolerance = 1e-4;
    opt.max_coordinates = 60;
    auto rep = ad::finite_difference_check(loss, params, opt);
    CHECK(rep.pass);
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(8);
  Param w{0, oracle::random({4, 4}, rng)};
  DenseTensor x = oracle::random({3, 4}, rng), r1 = oracle::random({3, 4}, rng), r2 = oracle::random({3, 4}, rng);
  auto grad_of = [&](bool first, bool second) {
    Tape t;
    Var y = t.linear(t.constant(x), t.param(w), nullptr);
    Var q = t.hadamard(y, y);
    Var l1 = t.sum(t.hadamard(q, t.constant(r1)));
    Var l2 = t.sum(t.hadamard(q, t.constant(r2)));
    Var loss = first && second ? t.add(l1, l2) : first ? l1 : l2;
    return t.backward(loss).at(0);
  };
  DenseTensor both = grad_of(true, true), a = grad_of(true, false), b = grad_of(false, true);
  for (std::size_t i = 0; i < both.size(); ++i) CHECK(std::abs(both[i] - (a[i] + b[i])) < 1e-12);
}

TEST_CASE("every tape primitive passes the gradient check") {
  ad::GradcheckReport rep = ad::run_gradcheck(3, 17);
  for (const auto& c : rep.cases) {
    INFO(c.name);
    CHECK(c.pass);
  }
  CHECK(rep.pass);
}
