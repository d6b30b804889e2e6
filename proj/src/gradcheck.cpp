#include "monet/gradcheck.hpp"

#include <functional>
#include <iomanip>
#include <json.hpp>
#include <random>
#include <sstream>

#include "monet/autodiff.hpp"
#include "monet/model.hpp"

namespace monet::ad {

namespace {

constexpr double kPrimitiveTol = 1e-5;
constexpr double kModelTol = 1e-4;

DenseTensor random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  DenseTensor t(std::move(s));
  std::normal_distribution<double> d(0.0, scale);
  for (double& v : t.data()) v = d(rng);
  return t;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Inputs become trainable leaves; the loss is <out, R> for a fixed random R so every
/// output coordinate contributes with a generic weight.
struct PrimitiveCase {
  std::string name;
  std::function<std::vector<DenseTensor>(std::mt19937_64&)> inputs;
  std::function<Var(Tape&, const std::vector<Var>&)> apply;
};

std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> c;
  auto grid = [](std::mt19937_64& r) {
    return Shape{pick(r, 1, 2), pick(r, 1, 4), pick(r, 1, 4), 4 * pick(r, 1, 2)};
  };
  c.push_back({"matmul",
               [](auto& r) {
                 const std::size_t p = pick(r, 1, 4), q = pick(r, 1, 4), s = pick(r, 1, 4);
                 return std::vector{random_tensor({p, q}, r), random_tensor({q, s}, r)};
               },
               [](Tape& t, const auto& v) { return t.matmul(v[0], v[1]); }});
  c.push_back({"linear",
               [](auto& r) {
                 const std::size_t n = pick(r, 1, 4), d = pick(r, 1, 5), m = pick(r, 1, 5);
                 return std::vector{random_tensor({n, d}, r), random_tensor({m, d}, r), random_tensor({m}, r)};
               },
               [](Tape& t, const auto& v) { return t.linear(v[0], v[1], &v[2]); }});
  auto binary = [&](const char* name, std::function<Var(Tape&, Var, Var)> op) {
    c.push_back({name,
                 [](auto& r) {
                   const Shape s{pick(r, 1, 3), pick(r, 1, 5)};
                   return std::vector{random_tensor(s, r), random_tensor(s, r)};
                 },
                 [op](Tape& t, const auto& v) { return op(t, v[0], v[1]); }});
  };
  binary("hadamard", [](Tape& t, Var a, Var b) { return t.hadamard(a, b); });
  binary("add", [](Tape& t, Var a, Var b) { return t.add(a, b); });
  binary("sub", [](Tape& t, Var a, Var b) { return t.sub(a, b); });
  binary("mse", [](Tape& t, Var a, Var b) { return t.mse(a, b); });
  c.push_back({"scale", [](auto& r) { return std::vector{random_tensor({pick(r, 1, 3), pick(r, 1, 4)}, r)}; },
               [](Tape& t, const auto& v) { return t.scale(v[0], -1.7); }});
  c.push_back({"sum", [](auto& r) { return std::vector{random_tensor({pick(r, 1, 3), pick(r, 1, 4)}, r)}; },
               [](Tape& t, const auto& v) { return t.sum(v[0]); }});
  c.push_back({"layernorm",
               [](auto& r) {
                 const std::size_t n = pick(r, 1, 4), d = pick(r, 2, 6);
                 return std::vector{random_tensor({n, d}, r), random_tensor({d}, r), random_tensor({d}, r)};
               },
               [](Tape& t, const auto& v) { return t.layernorm(v[0], v[1], v[2], 1e-5); }});
  c.push_back({"spatial_shift", [grid](auto& r) { return std::vector{random_tensor(grid(r), r)}; },
               [](Tape& t, const auto& v) { return t.spatial_shift(v[0]); }});
  c.push_back({"spatial_shift_reversed", [grid](auto& r) { return std::vector{random_tensor(grid(r), r)}; },
               [](Tape& t, const auto& v) { return t.spatial_shift(v[0], true); }});
  c.push_back({"conv2d",
               [](auto& r) {
                 const std::size_t k = pick(r, 1, 2), s = pick(r, 1, 2), out = pick(r, 1, 2);
                 const std::size_t side = k + s * out;  // (side - k) divisible by s
                 const std::size_t cin = pick(r, 1, 3), cout = pick(r, 1, 3);
                 auto x = random_tensor({pick(r, 1, 2), side, side, cin}, r);
                 auto w = random_tensor({cout, k, k, cin}, r);
                 auto b = random_tensor({cout}, r);
                 auto stride = DenseTensor::scalar(static_cast<double>(s));
                 return std::vector{x, w, b, stride};
               },
               [](Tape& t, const auto& v) {
                 return t.conv2d(v[0], v[1], &v[2], static_cast<std::size_t>(v[3].value().item()));
               }});
  c.push_back({"avgpool", [grid](auto& r) { return std::vector{random_tensor(grid(r), r)}; },
               [](Tape& t, const auto& v) { return t.avgpool(v[0]); }});
  c.push_back({"cross_entropy",
               [](auto& r) {
                 const std::size_t b = pick(r, 1, 4), k = pick(r, 2, 6);
                 DenseTensor targets({b});
                 for (std::size_t i = 0; i < b; ++i) targets[i] = static_cast<double>(pick(r, 0, k - 1));
                 return std::vector{random_tensor({b, k}, r), targets};
               },
               [](Tape& t, const auto& v) {
                 std::vector<std::size_t> tg;
                 for (double x : v[1].value().data()) tg.push_back(static_cast<std::size_t>(x));
                 return t.cross_entropy(v[0], tg, 0.1);
               }});
  c.push_back({"gather_cols", [](auto& r) { return std::vector{random_tensor({pick(r, 1, 3), 4}, r)}; },
               [](Tape& t, const auto& v) { return t.gather_cols(v[0], {3, 0, 0, 2}); }});
  c.push_back({"concat_cols",
               [](auto& r) {
                 const std::size_t n = pick(r, 1, 3);
                 return std::vector{random_tensor({n, pick(r, 1, 3)}, r), random_tensor({n, pick(r, 1, 3)}, r)};
               },
               [](Tape& t, const auto& v) { return t.concat_cols(v[0], v[1]); }});
  c.push_back({"reshape", [](auto& r) { return std::vector{random_tensor({2, 3 * pick(r, 1, 2)}, r)}; },
               [](Tape& t, const auto& v) {
                 return t.reshape(v[0], Shape{v[0].value().size()});
               }});
  return c;
}

GradcheckCase run_primitive(const PrimitiveCase& pc, std::size_t trials, std::mt19937_64& rng) {
  GradcheckCase out{pc.name, trials, 0, 0.0, kPrimitiveTol, true};
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::vector<DenseTensor> values = pc.inputs(rng);
    std::vector<Param> params;
    for (std::size_t i = 0; i < values.size(); ++i) params.push_back(Param{static_cast<ParamId>(i), values[i]});
    // Index-like inputs (conv stride, class targets) ride along as constants.
    const bool has_aux = pc.name == "conv2d" || pc.name == "cross_entropy";
    const std::size_t trainable = has_aux ? params.size() - 1 : params.size();
    DenseTensor weights;
    bool weights_ready = false;
    LossBuilder f = [&](Tape& t) {
      std::vector<Var> vars;
      for (std::size_t i = 0; i < params.size(); ++i) {
        vars.push_back(i < trainable ? t.param(params[i]) : t.constant(params[i].value));
      }
      const Var y = pc.apply(t, vars);
      if (!weights_ready) {
        weights = random_tensor(y.shape(), rng);
        weights_ready = true;
      }
      return t.sum(t.hadamard(y, t.constant(weights)));
    };
    std::vector<Param*> ptrs;
    for (std::size_t i = 0; i < trainable; ++i) ptrs.push_back(&params[i]);
    const FdReport rep = finite_difference_check(f, ptrs, FdOptions{1e-5, kPrimitiveTol, 0, 0});
    out.coordinates += rep.coordinates.size();
    out.max_rel_error = std::max(out.max_rel_error, rep.max_rel_error);
    out.pass = out.pass && rep.pass;
  }
  return out;
}

GradcheckCase run_model(std::size_t trials, std::mt19937_64& rng) {
  GradcheckCase out{"model_2block_loss", trials, 0, 0.0, kModelTol, true};
  for (std::size_t trial = 0; trial < trials; ++trial) {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden = 8;
    cfg.expansion = 2;
    cfg.shrinkage = 2;
    cfg.patch_size = 1;
    cfg.image_height = cfg.image_width = 4;
    cfg.num_classes = 3;
    cfg.norm_eps = 1e-5;
    MonetModel model = build(cfg, rng());
    // Nonzero biases and norm affines so their gradients are exercised too.
    for (auto& np : model.parameters()) {
      if (np.param->value.rank() == 1) {
        for (double& v : np.param->value.data()) v += std::normal_distribution<double>(0.0, 0.1)(rng);
      }
    }
    const DenseTensor images = random_tensor({2, 4, 4, 3}, rng);
    const std::vector<std::size_t> targets{pick(rng, 0, 2), pick(rng, 0, 2)};
    LossBuilder f = [&](Tape& t) {
      TapeBackend be(t);
      return t.cross_entropy(forward(be, model, be.input(images)), targets, 0.1);
    };
    std::vector<Param*> ptrs;
    for (auto& np : model.parameters()) ptrs.push_back(np.param);
    const FdReport rep = finite_difference_check(f, ptrs, FdOptions{1e-5, kModelTol, 0, 0});
    out.coordinates += rep.coordinates.size();
    out.max_rel_error = std::max(out.max_rel_error, rep.max_rel_error);
    out.pass = out.pass && rep.pass;
  }
  return out;
}

}  // namespace

GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradcheckReport r;
  for (const auto& pc : primitive_cases()) r.cases.push_back(run_primitive(pc, trials, rng));
  r.cases.push_back(run_model(trials, rng));
  r.pass = true;
  for (const auto& c : r.cases) r.pass = r.pass && c.pass;
  return r;
}

std::string GradcheckReport::to_json() const {
  nlohmann::json j;
  j["pass"] = pass;
  for (const auto& c : cases) {
    j["cases"].push_back({{"name", c.name},
                          {"trials", c.trials},
                          {"coordinates", c.coordinates},
                          {"max_rel_error", c.max_rel_error},
                          {"tolerance", c.tolerance},
                          {"pass", c.pass}});
  }
  return j.dump(2);
}

std::string GradcheckReport::to_table() const {
  std::ostringstream os;
  for (const auto& c : cases) {
    os << std::left << std::setw(24) << c.name << std::right << std::setw(8) << c.coordinates << std::setw(14)
       << std::scientific << std::setprecision(2) << c.max_rel_error << "  " << (c.pass ? "ok" : "FAIL") << '\n';
  }
  return os.str();
}

}  // namespace monet::ad
