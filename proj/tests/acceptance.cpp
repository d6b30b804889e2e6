// Acceptance checks, one per criterion. Usage: acceptance [criterion...]; with no argument every
// criterion runs. Each prints "criterion <id>: PASS|FAIL (<detail>, <seconds>s)".
// Exit status: 0 all selected passed, 1 a failure, 77 a criterion that needs data not present.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "monet/audit.hpp"
#include "monet/complexity.hpp"
#include "monet/data.hpp"
#include "monet/gradcheck.hpp"
#include "monet/model.hpp"
#include "monet/node.hpp"
#include "monet/polyoracle.hpp"
#include "monet/trainer.hpp"

using namespace monet;

namespace {

enum class Outcome { pass, fail, missing_data };

struct Result {
  Outcome outcome;
  std::string detail;
};

Result verdict(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Result criterion1() {
  poly::DegreeExperiment e;
  e.target = poly::DegreeTarget::mu_layer;
  e.channels = 2;
  e.rational = true;
  const poly::DegreeVerdict v = poly::run_degree_experiment(e);
  return verdict(v.max_degree == 2 && v.cross_term_found && v.pass,
                 fmt("Mu-Layer max degree %zu, x1*x2 term %s", v.max_degree, v.cross_term_found ? "present" : "absent"));
}

Result criterion2() {
  poly::DegreeExperiment blk;
  blk.target = poly::DegreeTarget::block;
  blk.grid = 2;
  const poly::DegreeVerdict b = poly::run_degree_experiment(blk);
  poly::DegreeExperiment st;
  st.target = poly::DegreeTarget::stack;
  st.blocks = 2;
  const poly::DegreeVerdict s = poly::run_degree_experiment(st);
  return verdict(b.max_degree == 4 && s.max_degree == 16 && b.pass && s.pass,
                 fmt("block degree %zu, 2-block stack degree %zu", b.max_degree, s.max_degree));
}

Result criterion3() {
  std::size_t configs = 0, agree = 0;
  for (std::size_t c : {8, 192})
    for (std::size_t s : {1, 4})
      for (std::size_t r : {1, 3})
        for (std::size_t n : {1, 32})
          for (std::size_t p : {4, 7}) {
            ModelConfig cfg;
            cfg.hidden = c;
            cfg.shrinkage = s;
            cfg.expansion = r;
            cfg.depth = n;
            cfg.patch_size = p;
            cfg.num_classes = 10;
            cfg.image_height = cfg.image_width = 8 * p;
            ++configs;
            agree += complexity::params_closed_form(cfg).params_total == build_zero(cfg).parameter_count();
          }
  const ModelConfig tiny = ModelConfig::tiny();
  const complexity::CostReport closed = complexity::closed_form(tiny);
  const complexity::CostReport emp = complexity::empirical_count(build_zero(tiny));
  const double perr = std::abs(double(closed.params_total) - 14.0e6) / 14.0e6;
  const double ferr = std::abs(double(closed.flops_total) - 3.6e9) / 3.6e9;
  const bool ok = agree == configs && perr < 0.03 && ferr < 0.10 && emp.params_total == closed.params_total &&
                  emp.flops_total == closed.flops_total;
  return verdict(ok, fmt("%zu/%zu grid configs exact; Tiny %.2fM params (%.1f%% off), %.2f GFLOPs (%.1f%% off)", agree,
                         configs, closed.params_total / 1e6, 100 * perr, closed.flops_total / 1e9, 100 * ferr));
}

Result criterion4() {
  node::LotkaVolterra lv;
  const std::vector<double> x0{1.0, 1.0};
  const node::Trajectory data = node::generate_lotka_volterra(lv, x0, 100, 10.0);
  node::PolyODEModel m(2);
  const node::FitResult res = node::fit(m, data, node::FitOptions{});
  // basis order: x, y, x², xy, y²
  const double truth[2][5] = {{lv.alpha, 0, 0, -lv.beta, 0}, {0, -lv.delta, 0, lv.gamma, 0}};
  double worst = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t b = 0; b < 5; ++b) worst = std::max(worst, std::abs(m.coefficient(i, b) - truth[i][b]));
  const double ratio = res.loss_curve.size() > 20 ? res.loss_curve[20] / res.loss_curve[0] : INFINITY;
  const auto eqs = node::extract_symbolic(m, 0.02);
  return verdict(worst < 0.02 && ratio < 0.01,
                 fmt("max coefficient error %.2e, epoch-20 loss ratio %.3f%%; %s; %s", worst, 100 * ratio,
                     eqs[0].c_str(), eqs[1].c_str()));
}

Result criterion5() {
  const ad::GradcheckReport r = ad::run_gradcheck(50, 0);
  double prim = 0.0, model = 0.0;
  std::size_t failed = 0;
  for (const auto& c : r.cases) {
    (c.tolerance < 1e-4 ? prim : model) = std::max(c.tolerance < 1e-4 ? prim : model, c.max_rel_error);
    failed += !c.pass;
  }
  return verdict(r.pass && failed == 0,
                 fmt("%zu cases x 50 trials, max rel error primitives %.1e, 2-block model %.1e", r.cases.size(), prim,
                     model));
}

Result criterion6a() {
  const ModelConfig cfg = ModelConfig::cifar_small();
  const auto set = data::synthetic(32, cfg.image_height, cfg.image_width, cfg.in_channels, cfg.num_classes, 6);
  MonetModel m = build(cfg, 0);
  train::TrainSettings ts;
  ts.batch = 8;
  ts.schedule = train::Schedule{1e-3, 1e-3, 1e-4, 0, 200};
  ts.seed = 1;
  train::AdamW opt(ts.adamw);
  const double initial = train::evaluate(m, set, 32).top1;
  double acc = initial;
  std::size_t epoch = 0;
  for (; epoch < 200 && acc < 1.0; ++epoch) {
    train::train_epoch(m, opt, set, ts, epoch);
    acc = train::evaluate(m, set, 32).top1;
  }
  return verdict(acc == 1.0, fmt("depth-8 width-64 model, 32 samples, train top-1 %.1f%% at init, %.1f%% after %zu epochs",
                                 100 * initial, 100 * acc, epoch));
}

Result criterion6b() {
  const char* dir = std::getenv("MONET_CIFAR10_DIR");
  if (!dir || !std::filesystem::exists(std::filesystem::path(dir) / "data_batch_1.bin")) {
    return {Outcome::missing_data,
            "CIFAR-10 binaries not found (set MONET_CIFAR10_DIR); 55% test top-1 after 20 epochs not evaluated"};
  }
  const data::Cifar10 d = data::read_cifar10_binary(dir);
  const ModelConfig cfg = ModelConfig::cifar_small();
  MonetModel m = build(cfg, 0);
  train::TrainSettings ts;
  ts.augment = data::AugmentPolicy{true, true, 4};
  ts.schedule = train::Schedule{1e-4, 2e-3, 1e-5, 2, 20};
  ts.adamw.weight_decay = 0.05;
  train::RunOptions ro;
  ro.epochs = 20;
  ro.log_progress = true;
  const auto hist = train::run(m, d.train, d.test, ts, ro);
  const double top1 = hist.back().val_top1;
  return verdict(top1 >= 0.55, fmt("CIFAR-10 test top-1 %.2f%% after 20 epochs", 100 * top1));
}

Result criterion7() {
  ModelConfig cfg = ModelConfig::cifar_small();
  std::mt19937_64 rng(7);
  DenseTensor img({1, cfg.image_height, cfg.image_width, cfg.in_channels});
  for (double& v : img.data()) v = std::normal_distribution<double>()(rng);

  cfg.use_norm = false;
  const AuditReport bare = audit_ops(build(cfg, 1), img);
  const std::uint64_t nonlinear =
      bare.counts[OpClass::divide] + bare.counts[OpClass::sqrt] + bare.counts[OpClass::compare];

  cfg.use_norm = true;
  const AuditReport normed = audit_ops(build(cfg, 1), img);
  const bool attributed = normed.clean() && normed.counts[OpClass::divide] == normed.layernorm_divide &&
                          normed.counts[OpClass::sqrt] == normed.layernorm_sqrt && normed.counts[OpClass::compare] == 0;
  return verdict(nonlinear == 0 && bare.clean() && attributed,
                 fmt("no-norm divide+sqrt+compare = %llu; with norms %llu divides and %llu sqrts, all in layer norms",
                     static_cast<unsigned long long>(nonlinear),
                     static_cast<unsigned long long>(normed.counts[OpClass::divide]),
                     static_cast<unsigned long long>(normed.counts[OpClass::sqrt])));
}

Result criterion8() {
  poly::DegreeExperiment full;
  full.grid = 2;
  poly::DegreeExperiment lin = full;
  lin.linear_second_layer = true;
  const poly::DegreeVerdict a = poly::run_degree_experiment(full), b = poly::run_degree_experiment(lin);
  return verdict(a.max_degree == 4 && b.max_degree == 2 && a.pass && b.pass,
                 fmt("block degree %zu, with linear second layer %zu", a.max_degree, b.max_degree));
}

struct Criterion {
  const char* id;
  double limit_seconds;
  Result (*run)();
};

const Criterion kCriteria[] = {
    {"1", 1, criterion1},       {"2", 30, criterion2},    {"3", 10, criterion3},
    {"4", 300, criterion4},     {"5", 120, criterion5},   {"6a", 7200, criterion6a},
    {"6b", 7200, criterion6b},  {"7", 5, criterion7},     {"8", 30, criterion8},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<const Criterion*> selected;
  for (int i = 1; i < argc; ++i) {
    const Criterion* found = nullptr;
    for (const auto& c : kCriteria)
      if (argv[i] == std::string(c.id)) found = &c;
    if (!found) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    selected.push_back(found);
  }
  if (selected.empty())
    for (const auto& c : kCriteria) selected.push_back(&c);

  bool any_fail = false, any_missing = false;
  for (const Criterion* c : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = c->run();
    } catch (const std::exception& e) {
      r = {Outcome::fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.outcome == Outcome::pass && secs > c->limit_seconds) {
      r.outcome = Outcome::fail;
      r.detail += fmt("; over the %.0f s limit", c->limit_seconds);
    }
    std::printf("criterion %s: %s (%s, %.2fs)\n", c->id, r.outcome == Outcome::pass ? "PASS" : "FAIL", r.detail.c_str(),
                secs);
    std::fflush(stdout);
    any_fail = any_fail || r.outcome == Outcome::fail;
    any_missing = any_missing || r.outcome == Outcome::missing_data;
  }
  if (any_fail) return 1;
  return any_missing ? 77 : 0;
}
