#include "monet/node.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "monet/error.hpp"
#include "monet/polyoracle.hpp"
#include "monet/trainer.hpp"

namespace monet::node {

void Trajectory::validate() const {
  if (times.size() != states.size()) throw InputError("trajectory: times and states differ in length");
  if (times.empty()) throw InputError("trajectory: no samples");
  const std::size_t n = states.front().size();
  if (n == 0) throw InputError("trajectory: zero-dimensional state");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) throw InputError("trajectory: non-finite time");
    if (i > 0 && !(times[i] > times[i - 1])) throw InputError("trajectory: times must be strictly increasing");
    if (states[i].size() != n) throw InputError("trajectory: state dimensions differ");
    for (double v : states[i]) {
      if (!std::isfinite(v)) throw InputError("trajectory: non-finite state");
    }
  }
}

namespace {

void axpy(std::vector<double>& out, const std::vector<double>& x, double a, const std::vector<double>& k) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + a * k[i];
}

std::vector<double> checked_eval(const Field& f, double t, std::span<const double> x, std::size_t n) {
  std::vector<double> k = f(t, x);
  if (k.size() != n) throw DimensionError("rk4: field returned the wrong dimension");
  return k;
}

}  // namespace

Trajectory rk4_integrate(const Field& f, std::span<const double> x0, std::span<const double> times,
                         std::size_t substeps) {
  if (substeps == 0) throw InputError("rk4: substeps must be positive");
  if (times.empty()) throw InputError("rk4: no output times");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw InputError("rk4: times must be strictly increasing");
  }
  const std::size_t n = x0.size();
  Trajectory out;
  std::vector<double> x(x0.begin(), x0.end()), tmp(n), k1, k2, k3, k4;
  out.times.push_back(times[0]);
  out.states.push_back(x);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double h = (times[i] - times[i - 1]) / static_cast<double>(substeps);
    for (std::size_t s = 0; s < substeps; ++s) {
      const double t = times[i - 1] + static_cast<double>(s) * h;
      k1 = checked_eval(f, t, x, n);
      axpy(tmp, x, 0.5 * h, k1);
      k2 = checked_eval(f, t + 0.5 * h, tmp, n);
      axpy(tmp, x, 0.5 * h, k2);
      k3 = checked_eval(f, t + 0.5 * h, tmp, n);
      axpy(tmp, x, h, k3);
      k4 = checked_eval(f, t + h, tmp, n);
      for (std::size_t j = 0; j < n; ++j) {
        x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        if (!std::isfinite(x[j])) {
          throw DivergenceError("rk4: state became non-finite at t = " + std::to_string(t + h), t + h);
        }
      }
    }
    out.times.push_back(times[i]);
    out.states.push_back(x);
  }
  return out;
}

Trajectory generate_lotka_volterra(const LotkaVolterra& p, std::span<const double> x0, std::size_t n, double t_end,
                                   std::size_t fine_substeps) {
  if (x0.size() != 2) throw InputError("lotka-volterra: initial state must have two entries");
  if (p.alpha < 0 || p.beta < 0 || p.delta < 0 || p.gamma < 0) {
    throw InputError("lotka-volterra: parameters must be non-negative");
  }
  if (n < 2 || !(t_end > 0.0)) throw InputError("lotka-volterra: need n >= 2 and t_end > 0");
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = t_end * static_cast<double>(i) / static_cast<double>(n - 1);
  const Field f = [p](double, std::span<const double> s) {
    return std::vector<double>{p.alpha * s[0] - p.beta * s[0] * s[1], -p.delta * s[1] + p.gamma * s[0] * s[1]};
  };
  return rk4_integrate(f, x0, times, fine_substeps);
}

// ---- polynomial field ----

PolyODEModel::PolyODEModel(std::size_t n) : n_(n) {
  if (n == 0) throw ConfigError("poly ODE: state dimension must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      quad_.emplace_back(i, j);
      left_.push_back(i);
      right_.push_back(j);
    }
  }
  w_ = Param{0, DenseTensor({n, basis_size()})};
}

std::vector<std::size_t> PolyODEModel::basis_variables(std::size_t b) const {
  if (b < n_) return {b};
  if (b >= basis_size()) throw InputError("poly ODE: basis index out of range");
  return {quad_[b - n_].first, quad_[b - n_].second};
}

std::vector<double> PolyODEModel::features(std::span<const double> x) const {
  if (x.size() != n_) throw DimensionError("poly ODE: state has the wrong dimension");
  std::vector<double> phi(x.begin(), x.end());
  for (const auto& [i, j] : quad_) phi.push_back(x[i] * x[j]);
  return phi;
}

ad::Var PolyODEModel::rhs(ad::Tape& tape, ad::Var x) const {
  const ad::Var quad = tape.hadamard(tape.gather_cols(x, left_), tape.gather_cols(x, right_));
  return tape.linear(tape.concat_cols(x, quad), tape.param(w_), nullptr);
}

std::vector<double> PolyODEModel::eval(std::span<const double> x) const {
  const std::vector<double> phi = features(x);
  std::vector<double> out(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t b = 0; b < phi.size(); ++b) out[i] += w_.value.at(i, b) * phi[b];
  }
  return out;
}

// ---- Mu-Layer field ----

MuLayerField::MuLayerField(std::size_t n, std::size_t hidden, std::size_t low_rank, std::uint64_t seed)
    : layer_(make_mu_layer(n, hidden, low_rank, n, /*shift=*/false)) {
  assign_ids(layer_);
  std::mt19937_64 rng(seed);
  init_xavier_normal(layer_, rng);
}

ad::Var MuLayerField::rhs(ad::Tape& tape, ad::Var x) const {
  const ad::Var u = tape.linear(x, tape.param(layer_.A), nullptr);
  const ad::Var t = tape.linear(x, tape.param(layer_.D), nullptr);
  const ad::Var v = tape.linear(t, tape.param(layer_.B), nullptr);
  const ad::Var h = tape.add(tape.hadamard(u, v), u);
  return tape.linear(h, tape.param(layer_.C), nullptr);
}

std::vector<double> MuLayerField::eval(std::span<const double> x) const {
  const DenseTensor in({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  const DenseTensor u = kernels::linear(in, layer_.A.value, nullptr);
  const DenseTensor v = kernels::linear(kernels::linear(in, layer_.D.value, nullptr), layer_.B.value, nullptr);
  const DenseTensor y = kernels::linear(kernels::add(kernels::hadamard(u, v), u), layer_.C.value, nullptr);
  return {y.data().begin(), y.data().end()};
}

PolyODEModel to_poly_model(const MuLayerField& field) {
  const std::size_t n = field.dim();
  MuLayerParams bias_free = field.layer();
  for (Param* b : {&bias_free.b1, &bias_free.b2, &bias_free.b3, &bias_free.b4}) b->value.fill(0.0);
  const auto out = poly::symbolic_forward(bias_free, poly::PolyTensor<double>::variables({1, n}));
  PolyODEModel model(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [e, c] : out.elements[i].terms()) {
      std::vector<std::size_t> vars;
      for (std::size_t k = 0; k < n; ++k) {
        for (std::uint32_t r = 0; r < e[k]; ++r) vars.push_back(k);
      }
      if (vars.size() == 1) {
        model.set_coefficient(i, vars[0], c);
      } else if (vars.size() == 2) {
        const auto& q = model.quadratic_terms();
        const auto it = std::find(q.begin(), q.end(), std::make_pair(vars[0], vars[1]));
        model.set_coefficient(i, n + static_cast<std::size_t>(it - q.begin()), c);
      } else {
        throw NumericError("mu-layer field: unexpected monomial of degree " + std::to_string(vars.size()));
      }
    }
  }
  return model;
}

// ---- fitting ----

ad::Var trajectory_loss(ad::Tape& tape, const VectorField& field, const Trajectory& data,
                        std::span<const std::size_t> starts, const FitOptions& options) {
  const std::size_t n = field.dim(), B = starts.size();
  if (data.dim() != n) throw DimensionError("trajectory loss: data dimension differs from the field");
  if (B == 0) throw InputError("trajectory loss: no segments");
  if (options.horizon == 0 || options.substeps == 0) throw InputError("trajectory loss: horizon and substeps must be positive");
  DenseTensor x0({B, n});
  for (std::size_t b = 0; b < B; ++b) {
    if (starts[b] + options.horizon >= data.size()) throw InputError("trajectory loss: segment runs past the data");
    for (std::size_t j = 0; j < n; ++j) x0.at(b, j) = data.states[starts[b]][j];
  }
  ad::Var x = tape.constant(std::move(x0));
  ad::Var total{};
  for (std::size_t k = 0; k < options.horizon; ++k) {
    DenseTensor hv({B, n}), target({B, n});
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t i = starts[b] + k;
      const double h = (data.times[i + 1] - data.times[i]) / static_cast<double>(options.substeps);
      for (std::size_t j = 0; j < n; ++j) {
        hv.at(b, j) = h;
        target.at(b, j) = data.states[i + 1][j];
      }
    }
    const ad::Var H = tape.constant(std::move(hv));
    for (std::size_t s = 0; s < options.substeps; ++s) {
      const ad::Var k1 = field.rhs(tape, x);
      const ad::Var k2 = field.rhs(tape, x + 0.5 * tape.hadamard(H, k1));
      const ad::Var k3 = field.rhs(tape, x + 0.5 * tape.hadamard(H, k2));
      const ad::Var k4 = field.rhs(tape, x + tape.hadamard(H, k3));
      x = x + (1.0 / 6.0) * tape.hadamard(H, k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.value().all_finite()) {
        const double t = data.times[starts[0] + k + 1];
        throw DivergenceError("trajectory loss: integrated state became non-finite", t);
      }
    }
    const ad::Var err = tape.mse(x, tape.constant(std::move(target)));
    total = k == 0 ? err : total + err;
  }
  return options.horizon == 1 ? total : (1.0 / static_cast<double>(options.horizon)) * total;
}

namespace {

std::vector<std::size_t> all_segments(const Trajectory& data, const FitOptions& options) {
  if (data.size() <= options.horizon) throw InputError("fit: trajectory shorter than the shooting horizon");
  std::vector<std::size_t> s(data.size() - options.horizon);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

}  // namespace

double full_loss(const VectorField& field, const Trajectory& data, const FitOptions& options) {
  const auto segs = all_segments(data, options);
  ad::Tape tape;
  return trajectory_loss(tape, field, data, segs, options).value().item();
}

FitResult fit(VectorField& field, const Trajectory& data, const FitOptions& options) {
  data.validate();
  if (options.batch == 0) throw InputError("fit: batch must be positive");
  std::vector<std::size_t> segs = all_segments(data, options);
  std::vector<Param*> params = field.trainable();
  train::AdamW opt(train::AdamWOptions{.weight_decay = 0.0});
  std::mt19937_64 rng(options.seed);

  FitResult result;
  result.loss_curve.push_back(full_loss(field, data, options));
  double rate_scale = 1.0;
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    const double progress = static_cast<double>(epoch) / static_cast<double>(options.max_epochs);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    const double epoch_lr = options.lr * (options.final_lr_ratio + (1.0 - options.final_lr_ratio) * cosine);
    std::shuffle(segs.begin(), segs.end(), rng);
    for (std::size_t start = 0; start < segs.size();) {
      const std::size_t n = std::min(options.batch, segs.size() - start);
      std::vector<DenseTensor> saved;
      for (const Param* p : params) saved.push_back(p->value);
      const train::AdamW saved_opt = opt;
      try {
        ad::Tape tape;
        const ad::Var loss = trajectory_loss(tape, field, data, std::span(segs).subspan(start, n), options);
        if (!std::isfinite(loss.value().item())) throw NumericError("fit: non-finite loss");
        ad::GradientStore grads = tape.backward(loss);
        if (!std::isfinite(grads.global_norm())) throw NumericError("fit: non-finite gradient");
        train::clip_grad_norm(grads, options.clip_norm);
        opt.step(params, grads, epoch_lr * rate_scale);
        for (const Param* p : params) {
          if (!p->value.all_finite()) throw NumericError("fit: non-finite parameters after a step");
        }
        start += n;
      } catch (const NumericError& e) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = saved[i];
        opt = saved_opt;
        if (++result.rejected_steps > options.max_retries) {
          const auto* div = dynamic_cast<const DivergenceError*>(&e);
          throw DivergenceError(std::string("fit: giving up after repeated rejected steps: ") + e.what(),
                                div ? div->time() : data.times.back());
        }
        rate_scale *= 0.5;
      }
    }
    ++result.epochs;
    double loss = 0.0;
    try {
      loss = full_loss(field, data, options);
    } catch (const NumericError&) {
      loss = std::numeric_limits<double>::infinity();
    }
    result.loss_curve.push_back(loss);
    if (options.target_loss > 0.0 && loss < options.target_loss) break;
  }
  return result;
}

// ---- symbolic read-off ----

std::vector<std::string> variable_names(std::size_t n) {
  if (n <= 3) {
    static const char* names[] = {"x", "y", "z"};
    return {names, names + n};
  }
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("x" + std::to_string(i + 1));
  return v;
}

std::vector<std::string> extract_symbolic(const PolyODEModel& model, double prune_tol) {
  const std::size_t n = model.dim();
  const auto names = variable_names(n);
  std::vector<std::string> monomials;
  for (std::size_t b = 0; b < model.basis_size(); ++b) {
    const auto vars = model.basis_variables(b);
    if (vars.size() == 1) {
      monomials.push_back(names[vars[0]]);
    } else if (vars[0] == vars[1]) {
      monomials.push_back(names[vars[0]] + "²");
    } else {
      monomials.push_back(names[vars[0]] + "·" + names[vars[1]]);
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string rhs;
    for (std::size_t b = 0; b < model.basis_size(); ++b) {
      const double c = model.coefficient(i, b);
      if (std::abs(c) < prune_tol) continue;
      char num[32];
      std::snprintf(num, sizeof num, "%g", std::abs(c));
      const bool neg = std::signbit(c);
      if (rhs.empty()) {
        rhs = (neg ? "−" : "") + std::string(num);
      } else {
        rhs += neg ? " − " : " + ";
        rhs += num;
      }
      rhs += "·" + monomials[b];
    }
    out.push_back("d" + names[i] + "/dt = " + (rhs.empty() ? "0" : rhs));
  }
  return out;
}

}  // namespace monet::node
