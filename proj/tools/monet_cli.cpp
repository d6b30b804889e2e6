// monet: train, evaluate and analyze MONet models from the command line.
//
// Machine-readable results go to stdout as JSON (and to --output when given); tables and
// progress go to stderr. Exit status: 0 success, 1 failed verification or runtime error,
// 2 usage error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "monet/audit.hpp"
#include "monet/complexity.hpp"
#include "monet/data.hpp"
#include "monet/error.hpp"
#include "monet/gradcheck.hpp"
#include "monet/model.hpp"
#include "monet/node.hpp"
#include "monet/polyoracle.hpp"
#include "monet/trainer.hpp"

namespace {

using nlohmann::json;
using namespace monet;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string data;
  std::size_t epochs = 0;
  std::string output;
  std::size_t batch = 0;
  bool no_norm = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config JSON file or preset name");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--data", c.data, "Dataset directory");
  cmd->add_option("--epochs", c.epochs, "Training epochs");
  cmd->add_option("--output", c.output, "Also write the JSON result to this file");
  cmd->add_option("--batch", c.batch, "Batch size");
  cmd->add_flag("--no-norm", c.no_norm, "Disable layer norms");
}

ModelConfig resolve_config(const std::string& arg, const std::string& fallback) {
  const std::string name = arg.empty() ? fallback : arg;
  if (std::filesystem::exists(name)) return ModelConfig::load(name);
  return ModelConfig::preset(name);
}

void emit(const Common& c, const std::string& text) {
  std::cout << text << '\n';
  if (!c.output.empty()) {
    std::ofstream out(c.output);
    if (!out) throw FormatError("cannot open " + c.output + " for writing");
    out << text << '\n';
  }
}

json metrics_json(const train::Metrics& m) {
  return {{"loss", m.loss}, {"top1", m.top1}, {"top5", m.top5}, {"samples", m.samples}};
}

// ---- train / eval ----

struct TrainArgs {
  std::size_t synthetic = 0;
  std::size_t subset = 0;
  double lr = 1e-3;
  double warmup = 1.0;
  double smoothing = 0.1;
  double weight_decay = 0.01;
  bool no_augment = false;
  std::string checkpoint;
  std::string csv;
};

struct Datasets {
  data::LabeledImageSet train;
  data::LabeledImageSet test;
};

Datasets load_data(const Common& c, const ModelConfig& cfg, std::size_t synthetic, std::size_t subset) {
  Datasets d;
  if (synthetic > 0) {
    d.train = data::synthetic(synthetic, cfg.image_height, cfg.image_width, cfg.in_channels,
                              std::max<std::size_t>(cfg.num_classes, 1), c.seed);
    d.test = d.train;
  } else {
    if (c.data.empty()) throw InputError("--data <cifar-10 directory> or --synthetic <count> is required");
    data::Cifar10 cifar = data::read_cifar10_binary(c.data);
    d.train = std::move(cifar.train);
    d.test = std::move(cifar.test);
  }
  if (subset > 0 && subset < d.train.count) {
    std::vector<std::size_t> idx(subset);
    std::iota(idx.begin(), idx.end(), 0);
    d.train = d.train.subset(idx);
  }
  return d;
}

int cmd_train(const Common& c, const TrainArgs& a) {
  ModelConfig cfg = resolve_config(c.config, "cifar-small");
  if (c.no_norm) cfg.use_norm = false;
  const Datasets d = load_data(c, cfg, a.synthetic, a.subset);
  MonetModel model = build(cfg, c.seed);
  train::TrainSettings s;
  s.batch = c.batch > 0 ? c.batch : 128;
  s.label_smoothing = a.smoothing;
  s.seed = c.seed;
  s.adamw.weight_decay = a.weight_decay;
  if (!a.no_augment && a.synthetic == 0) s.augment = data::AugmentPolicy{true, true, 4};
  train::RunOptions ro;
  ro.epochs = c.epochs > 0 ? c.epochs : 20;
  s.schedule = train::Schedule{a.lr / 10.0, a.lr, 1e-5, std::min(a.warmup, ro.epochs * 0.5), static_cast<double>(ro.epochs)};
  ro.csv_path = a.csv;
  ro.checkpoint_path = a.checkpoint;
  ro.log_progress = true;
  std::cerr << "training " << cfg.name << " (" << model.parameter_count() << " parameters) on " << d.train.count
            << " images for " << ro.epochs << " epochs\n";
  const auto history = train::run(model, d.train, d.test, s, ro);
  json j;
  j["config"] = json::parse(cfg.to_json());
  for (const auto& r : history) {
    j["history"].push_back(
        {{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"val_top1", r.val_top1}, {"val_top5", r.val_top5}});
  }
  j["train"] = metrics_json(train::evaluate(model, d.train, s.batch));
  j["test"] = metrics_json(train::evaluate(model, d.test, s.batch));
  emit(c, j.dump(2));
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, std::size_t synthetic) {
  if (checkpoint.empty()) throw InputError("--checkpoint is required");
  const MonetModel model = load(checkpoint);
  const Datasets d = load_data(c, model.config, synthetic, 0);
  const auto m = train::evaluate(model, d.test, c.batch > 0 ? c.batch : 128);
  emit(c, json{{"checkpoint", checkpoint}, {"test", metrics_json(m)}}.dump(2));
  return kOk;
}

// ---- analyze ----

int cmd_analyze(const Common& c, bool empirical) {
  if (c.config.empty()) throw InputError("--config is required");
  ModelConfig cfg = resolve_config(c.config, "");
  if (c.no_norm) cfg.use_norm = false;
  complexity::CostReport r;
  if (empirical || cfg.multi_stage()) {
    if (cfg.multi_stage() && !empirical) std::cerr << "multi-stage config: closed forms do not apply, counting empirically\n";
    r = complexity::empirical_count(build_zero(cfg));
  } else {
    r = complexity::closed_form(cfg);
  }
  std::cerr << r.to_table();
  emit(c, r.to_json());
  return kOk;
}

// ---- verify-degree ----

struct DegreeArgs {
  std::string target;
  std::size_t blocks = 1;
  std::size_t channels = 0;
  std::size_t grid = 0;
  bool linear = false;
  bool f64 = false;
  std::size_t cap = 1'000'000;
};

int cmd_verify_degree(const Common& c, const DegreeArgs& a) {
  poly::DegreeExperiment e;
  e.target = !a.target.empty() ? poly::parse_degree_target(a.target)
                               : (a.blocks == 1 ? poly::DegreeTarget::block : poly::DegreeTarget::stack);
  e.blocks = a.blocks;
  e.channels = a.channels > 0 ? a.channels : (e.target == poly::DegreeTarget::mu_layer ? 2 : 4);
  e.grid = a.grid > 0 ? a.grid : (e.target == poly::DegreeTarget::block ? 2 : 1);
  e.linear_second_layer = a.linear;
  e.rational = !a.f64;
  e.seed = c.seed;
  e.term_cap = a.cap;
  const poly::DegreeVerdict v = poly::run_degree_experiment(e);
  std::cerr << "max degree " << v.max_degree << " (expected " << v.expected_max_degree << "), cross term "
            << (v.cross_term_found ? "found" : "missing") << ", " << v.term_count << " terms\n";
  emit(c, v.to_json());
  return v.pass ? kOk : kFailed;
}

// ---- gradcheck ----

int cmd_gradcheck(const Common& c, std::size_t trials) {
  const ad::GradcheckReport r = ad::run_gradcheck(trials, c.seed);
  std::cerr << r.to_table();
  emit(c, r.to_json());
  return r.pass ? kOk : kFailed;
}

// ---- node-fit ----

struct NodeArgs {
  node::LotkaVolterra lv;
  double x0 = 1.0, y0 = 1.0;
  std::size_t points = 100;
  double t_end = 10.0;
  std::string mode = "poly";
  std::size_t hidden = 4;
  double prune = 1e-3;
  std::string csv;
};

int cmd_node_fit(const Common& c, const NodeArgs& a) {
  const std::vector<double> x0{a.x0, a.y0};
  const node::Trajectory data = node::generate_lotka_volterra(a.lv, x0, a.points, a.t_end);
  node::FitOptions fo;
  fo.seed = c.seed;
  if (c.epochs > 0) fo.max_epochs = c.epochs;
  if (c.batch > 0) fo.batch = c.batch;

  node::PolyODEModel poly(2);
  node::FitResult fr;
  if (a.mode == "poly") {
    fr = node::fit(poly, data, fo);
  } else if (a.mode == "mu") {
    node::MuLayerField field(2, a.hidden, a.hidden, c.seed);
    fr = node::fit(field, data, fo);
    poly = node::to_poly_model(field);
  } else {
    throw InputError("--mode must be poly or mu");
  }

  const auto names = node::variable_names(2);
  std::vector<std::string> basis;
  for (std::size_t b = 0; b < poly.basis_size(); ++b) {
    std::string s;
    for (std::size_t v : poly.basis_variables(b)) s += (s.empty() ? "" : "*") + names[v];
    basis.push_back(s);
  }
  json coeffs;
  for (std::size_t i = 0; i < 2; ++i) {
    json row;
    for (std::size_t b = 0; b < poly.basis_size(); ++b) row[basis[b]] = poly.coefficient(i, b);
    coeffs["d" + names[i] + "/dt"] = row;
  }
  const auto eqs = node::extract_symbolic(poly, a.prune);
  for (const auto& e : eqs) std::cerr << e << '\n';

  if (!a.csv.empty()) {
    const node::Field f = [&](double, std::span<const double> s) { return poly.eval(s); };
    const node::Trajectory pred = node::rk4_integrate(f, x0, data.times, 20);
    std::ofstream out(a.csv);
    if (!out) throw FormatError("cannot open " + a.csv + " for writing");
    out << "t,x_true,y_true,x_pred,y_pred\n";
    out.precision(12);
    for (std::size_t i = 0; i < data.size(); ++i) {
      out << data.times[i] << ',' << data.states[i][0] << ',' << data.states[i][1] << ',' << pred.states[i][0]
          << ',' << pred.states[i][1] << '\n';
    }
  }
  json j{{"mode", a.mode},
         {"coefficients", coeffs},
         {"equations", eqs},
         {"loss_curve", fr.loss_curve},
         {"epochs", fr.epochs},
         {"rejected_steps", fr.rejected_steps}};
  emit(c, j.dump(2));
  return kOk;
}

// ---- audit-ops ----

ModelConfig audit_config() {
  ModelConfig cfg;
  cfg.name = "audit";
  cfg.depth = 2;
  cfg.hidden = 8;
  cfg.expansion = 2;
  cfg.shrinkage = 2;
  cfg.patch_size = 2;
  cfg.image_height = cfg.image_width = 8;
  cfg.num_classes = 10;
  return cfg;
}

int cmd_audit(const Common& c, const std::string& target) {
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> nd;
  auto random_tensor = [&](Shape s) {
    DenseTensor t(std::move(s));
    for (double& v : t.data()) v = nd(rng);
    return t;
  };
  AuditReport r;
  if (target == "model") {
    ModelConfig cfg = c.config.empty() ? audit_config() : resolve_config(c.config, "");
    if (c.no_norm) cfg.use_norm = false;
    const MonetModel m = build(cfg, c.seed);
    r = audit_ops(m, random_tensor({1, cfg.image_height, cfg.image_width, cfg.in_channels}));
  } else if (target == "block" || target == "mu") {
    PolyBlockParams block = make_poly_block(8, 2, 2, !c.no_norm);
    init_xavier_normal(block, rng);
    const DenseTensor x = random_tensor({1, 4, 4, 8});
    if (target == "block") {
      r = audit([&] {
        EvalBackend be;
        (void)poly_block_forward(be, block, x);
      });
    } else {
      r = audit([&] {
        EvalBackend be;
        (void)mu_layer_forward(be, block.layer1, x);
      });
    }
  } else {
    throw InputError("--target must be model, block or mu");
  }
  const std::uint64_t nonpoly =
      r.counts[OpClass::divide] + r.counts[OpClass::sqrt] + r.counts[OpClass::compare] + r.counts[OpClass::other];
  const bool pass = r.clean() && (!c.no_norm || nonpoly == 0);
  std::cerr << r.to_table();
  json j = json::parse(r.to_json());
  j["target"] = target;
  j["norms"] = !c.no_norm;
  j["pass"] = pass;
  emit(c, j.dump(2));
  return pass ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MONet multilinear-operator network engine", "monet"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;
  TrainArgs train_args;
  DegreeArgs degree_args;
  NodeArgs node_args;
  std::string checkpoint, audit_target = "model";
  std::size_t eval_synthetic = 0, grad_trials = 50;
  bool empirical = false;

  auto* train = app.add_subcommand("train", "Train a model (CIFAR-10 binary or synthetic data)");
  add_common(train, common);
  train->add_option("--synthetic", train_args.synthetic, "Use this many random images instead of --data");
  train->add_option("--subset", train_args.subset, "Train on the first N images only");
  train->add_option("--lr", train_args.lr, "Peak learning rate");
  train->add_option("--warmup", train_args.warmup, "Warmup epochs");
  train->add_option("--smoothing", train_args.smoothing, "Label smoothing");
  train->add_option("--weight-decay", train_args.weight_decay, "AdamW weight decay");
  train->add_flag("--no-augment", train_args.no_augment, "Disable flip/crop augmentation");
  train->add_option("--checkpoint", train_args.checkpoint, "Checkpoint path (written every epoch)");
  train->add_option("--csv", train_args.csv, "Per-epoch CSV log");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--synthetic", eval_synthetic, "Evaluate on this many random images");

  auto* analyze = app.add_subcommand("analyze", "Parameter and FLOP counts");
  add_common(analyze, common);
  analyze->add_flag("--empirical", empirical, "Count by enumeration and a traced forward pass");

  auto* degree = app.add_subcommand("verify-degree", "Symbolic interaction-degree check");
  add_common(degree, common);
  degree->add_option("--target", degree_args.target, "mu, block or stack");
  degree->add_option("--blocks", degree_args.blocks, "Number of stacked blocks");
  degree->add_option("--channels", degree_args.channels, "Channel width");
  degree->add_option("--grid", degree_args.grid, "Token grid side");
  degree->add_flag("--linear-second-layer", degree_args.linear, "Replace the second Mu-Layer by a linear layer");
  degree->add_flag("--f64", degree_args.f64, "Use f64 coefficients instead of exact rationals");
  degree->add_option("--term-cap", degree_args.cap, "Maximum number of polynomial terms");

  auto* grad = app.add_subcommand("gradcheck", "Autodiff versus central finite differences");
  add_common(grad, common);
  grad->add_option("--trials", grad_trials, "Random trials per case");

  auto* nodefit = app.add_subcommand("node-fit", "Fit a polynomial neural ODE to Lotka-Volterra data");
  add_common(nodefit, common);
  nodefit->add_option("--alpha", node_args.lv.alpha);
  nodefit->add_option("--beta", node_args.lv.beta);
  nodefit->add_option("--delta", node_args.lv.delta);
  nodefit->add_option("--gamma", node_args.lv.gamma);
  nodefit->add_option("--x0", node_args.x0);
  nodefit->add_option("--y0", node_args.y0);
  nodefit->add_option("--points", node_args.points, "Number of samples");
  nodefit->add_option("--t-end", node_args.t_end, "End time");
  nodefit->add_option("--mode", node_args.mode, "poly (monomial basis) or mu (Mu-Layer field)");
  nodefit->add_option("--hidden", node_args.hidden, "Mu-Layer hidden width in mu mode");
  nodefit->add_option("--prune", node_args.prune, "Drop coefficients below this magnitude");
  nodefit->add_option("--csv", node_args.csv, "Write predicted vs. true trajectory");

  auto* auditcmd = app.add_subcommand("audit-ops", "Classify every arithmetic operation of a forward pass");
  add_common(auditcmd, common);
  auditcmd->add_option("--target", audit_target, "model, block or mu");

  if (argc <= 1) {
    std::cerr << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*train) return cmd_train(common, train_args);
    if (*eval) return cmd_eval(common, checkpoint, eval_synthetic);
    if (*analyze) return cmd_analyze(common, empirical);
    if (*degree) return cmd_verify_degree(common, degree_args);
    if (*grad) return cmd_gradcheck(common, grad_trials);
    if (*nodefit) return cmd_node_fit(common, node_args);
    if (*auditcmd) return cmd_audit(common, audit_target);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kUsage;
}
