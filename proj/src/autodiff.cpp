#include "monet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "monet/error.hpp"

namespace monet::ad {

const DenseTensor& Var::value() const { return tape->node(id).value; }

const DenseTensor& GradientStore::at(ParamId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) throw InputError("no gradient recorded for parameter " + std::to_string(id));
  return it->second;
}

const DenseTensor* GradientStore::find(ParamId id) const {
  auto it = grads_.find(id);
  return it == grads_.end() ? nullptr : &it->second;
}

void GradientStore::accumulate(const GradientStore& other) {
  for (const auto& [id, g] : other.grads_) {
    auto it = grads_.find(id);
    if (it == grads_.end()) {
      grads_.emplace(id, g);
    } else {
      kernels::accumulate(it->second, g);
    }
  }
}

double GradientStore::global_norm() const {
  // Sum in ascending id order so the norm does not depend on hash-map iteration order.
  std::vector<ParamId> ids;
  ids.reserve(grads_.size());
  for (const auto& kv : grads_) ids.push_back(kv.first);
  std::sort(ids.begin(), ids.end());
  double sq = 0.0;
  for (ParamId id : ids) {
    for (double v : grads_.at(id).data()) sq += v * v;
  }
  return std::sqrt(sq);
}

void GradientStore::scale(double alpha) {
  for (auto& kv : grads_) {
    for (double& v : kv.second.data()) v *= alpha;
  }
}

void Tape::check_owner(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw InputError("variable does not belong to this tape");
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

namespace {

Node make_node(Op op, DenseTensor value, std::initializer_list<NodeId> inputs, NodeAux aux = {}) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.arity = static_cast<std::uint8_t>(inputs.size());
  std::copy(inputs.begin(), inputs.end(), n.inputs.begin());
  n.aux = std::move(aux);
  return n;
}

}  // namespace

Var Tape::param(const Param& p) {
  auto it = param_nodes_.find(p.id);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Var v = leaf(p.id, p.value);
  return v;
}

Var Tape::leaf(ParamId id, DenseTensor value) {
  if (param_nodes_.count(id) != 0) throw InputError("parameter " + std::to_string(id) + " already on tape");
  Node n = make_node(Op::leaf, std::move(value), {});
  n.trainable = true;
  n.param = id;
  Var v = push(std::move(n));
  param_nodes_.emplace(id, v.id);
  return v;
}

Var Tape::constant(DenseTensor value) { return push(make_node(Op::constant, std::move(value), {})); }

Var Tape::matmul(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  return push(make_node(Op::matmul, kernels::matmul(a.value(), b.value()), {a.id, b.id}));
}

Var Tape::linear(Var x, Var w, const Var* bias) {
  check_owner(x);
  check_owner(w);
  if (bias != nullptr) {
    check_owner(*bias);
    return push(make_node(Op::linear, kernels::linear(x.value(), w.value(), &bias->value()), {x.id, w.id, bias->id}));
  }
  return push(make_node(Op::linear, kernels::linear(x.value(), w.value(), nullptr), {x.id, w.id}));
}

Var Tape::hadamard(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  return push(make_node(Op::hadamard, kernels::hadamard(a.value(), b.value()), {a.id, b.id}));
}

Var Tape::add(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  return push(make_node(Op::add, kernels::add(a.value(), b.value()), {a.id, b.id}));
}

Var Tape::sub(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  return push(make_node(Op::sub, kernels::sub(a.value(), b.value()), {a.id, b.id}));
}

Var Tape::scale(Var a, double alpha) {
  check_owner(a);
  return push(make_node(Op::scale, kernels::scale(a.value(), alpha), {a.id}, alpha));
}

Var Tape::sum(Var a) {
  check_owner(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return push(make_node(Op::sum, DenseTensor::scalar(s), {a.id}));
}

Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
  check_owner(x);
  check_owner(gamma);
  check_owner(beta);
  LayerNormAux aux;
  DenseTensor y = kernels::layernorm(x.value(), gamma.value(), beta.value(), eps, &aux.stats);
  return push(make_node(Op::layernorm, std::move(y), {x.id, gamma.id, beta.id}, std::move(aux)));
}

Var Tape::spatial_shift(Var x, bool reversed) {
  check_owner(x);
  return push(make_node(Op::spatial_shift, kernels::spatial_shift(x.value(), reversed), {x.id}, ShiftAux{reversed}));
}

Var Tape::conv2d(Var x, Var w, const Var* bias, std::size_t stride) {
  check_owner(x);
  check_owner(w);
  if (bias != nullptr) {
    check_owner(*bias);
    return push(make_node(Op::conv2d, kernels::conv2d(x.value(), w.value(), &bias->value(), stride),
                          {x.id, w.id, bias->id}, ConvAux{stride}));
  }
  return push(make_node(Op::conv2d, kernels::conv2d(x.value(), w.value(), nullptr, stride), {x.id, w.id},
                        ConvAux{stride}));
}

Var Tape::avgpool(Var x) {
  check_owner(x);
  return push(make_node(Op::avgpool, kernels::global_avgpool(x.value()), {x.id}));
}

Var Tape::cross_entropy(Var logits, std::span<const std::size_t> targets, double smoothing) {
  check_owner(logits);
  CrossEntropyAux aux;
  const double loss = kernels::cross_entropy_label_smoothed(logits.value(), targets, smoothing, &aux.dlogits);
  return push(make_node(Op::cross_entropy, DenseTensor::scalar(loss), {logits.id}, std::move(aux)));
}

Var Tape::mse(Var prediction, Var target) {
  check_owner(prediction);
  check_owner(target);
  const auto& p = prediction.value();
  const auto& t = target.value();
  if (p.shape() != t.shape()) throw DimensionError("mse: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  return push(make_node(Op::mse, DenseTensor::scalar(s / static_cast<double>(p.size())), {prediction.id, target.id}));
}

Var Tape::gather_cols(Var x, std::vector<std::size_t> cols) {
  check_owner(x);
  const auto& v = x.value();
  const std::size_t rows = v.rows(), c = v.cols();
  for (std::size_t j : cols) {
    if (j >= c) throw DimensionError("gather_cols: column index out of range");
  }
  DenseTensor out(Shape{rows, cols.size()});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) out.at(r, j) = v[r * c + cols[j]];
  }
  return push(make_node(Op::gather_cols, std::move(out), {x.id}, IndexAux{std::move(cols)}));
}

Var Tape::concat_cols(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  const auto& va = a.value();
  const auto& vb = b.value();
  if (va.rows() != vb.rows()) throw DimensionError("concat_cols: row counts differ");
  const std::size_t rows = va.rows(), ca = va.cols(), cb = vb.cols();
  DenseTensor out(Shape{rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(va.raw() + r * ca, ca, out.raw() + r * (ca + cb));
    std::copy_n(vb.raw() + r * cb, cb, out.raw() + r * (ca + cb) + ca);
  }
  return push(make_node(Op::concat_cols, std::move(out), {a.id, b.id}));
}

Var Tape::reshape(Var x, Shape shape) {
  check_owner(x);
  return push(make_node(Op::reshape, x.value().reshaped(std::move(shape)), {x.id}));
}

GradientStore Tape::backward(Var seed) const {
  check_owner(seed);
  if (nodes_[seed.id].value.size() != 1) {
    throw InputError("backward seed must be a scalar, got shape " + shape_string(nodes_[seed.id].value.shape()));
  }
  std::vector<DenseTensor> grads(seed.id + 1);
  std::vector<bool> has(seed.id + 1, false);
  auto accumulate = [&](NodeId id, DenseTensor g) {
    if (!has[id]) {
      grads[id] = std::move(g);
      has[id] = true;
    } else {
      kernels::accumulate(grads[id], g);
    }
  };
  grads[seed.id] = DenseTensor(nodes_[seed.id].value.shape(), 1.0);
  has[seed.id] = true;

  GradientStore store;
  for (NodeId i = seed.id + 1; i-- > 0;) {
    if (!has[i]) continue;
    const Node& n = nodes_[i];
    const DenseTensor& g = grads[i];
    auto in = [&](int k) -> const DenseTensor& { return nodes_[n.inputs[k]].value; };
    switch (n.op) {
      case Op::leaf:
        if (n.trainable) store.set(n.param, g);
        break;
      case Op::constant:
        break;
      case Op::matmul:
        accumulate(n.inputs[0], kernels::matmul_nt(g, in(1)));
        accumulate(n.inputs[1], kernels::matmul_tn(in(0), g));
        break;
      case Op::linear: {
        DenseTensor dx, dw, db;
        kernels::linear_backward(in(0), in(1), g, &dx, &dw, n.arity == 3 ? &db : nullptr);
        accumulate(n.inputs[0], std::move(dx));
        accumulate(n.inputs[1], std::move(dw));
        if (n.arity == 3) accumulate(n.inputs[2], std::move(db));
        break;
      }
      case Op::hadamard:
        accumulate(n.inputs[0], kernels::hadamard(g, in(1)));
        accumulate(n.inputs[1], kernels::hadamard(g, in(0)));
        break;
      case Op::add:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], g);
        break;
      case Op::sub:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], kernels::scale(g, -1.0));
        break;
      case Op::scale:
        accumulate(n.inputs[0], kernels::scale(g, std::get<double>(n.aux)));
        break;
      case Op::sum:
        accumulate(n.inputs[0], DenseTensor(in(0).shape(), g.item()));
        break;
      case Op::layernorm: {
        DenseTensor dx, dgamma, dbeta;
        kernels::layernorm_backward(in(0), in(1), std::get<LayerNormAux>(n.aux).stats, g, dx, dgamma, dbeta);
        accumulate(n.inputs[0], std::move(dx));
        accumulate(n.inputs[1], std::move(dgamma));
        accumulate(n.inputs[2], std::move(dbeta));
        break;
      }
      case Op::spatial_shift:
        accumulate(n.inputs[0], kernels::spatial_shift_backward(g, std::get<ShiftAux>(n.aux).reversed));
        break;
      case Op::conv2d: {
        DenseTensor dx, dw, db;
        kernels::conv2d_backward(in(0), in(1), std::get<ConvAux>(n.aux).stride, g, &dx, &dw,
                                 n.arity == 3 ? &db : nullptr);
        accumulate(n.inputs[0], std::move(dx));
        accumulate(n.inputs[1], std::move(dw));
        if (n.arity == 3) accumulate(n.inputs[2], std::move(db));
        break;
      }
      case Op::avgpool:
        accumulate(n.inputs[0], kernels::global_avgpool_backward(g, kernels::grid_shape(in(0))));
        break;
      case Op::cross_entropy:
        accumulate(n.inputs[0], kernels::scale(std::get<CrossEntropyAux>(n.aux).dlogits, g.item()));
        break;
      case Op::mse: {
        const DenseTensor& p = in(0);
        const DenseTensor& t = in(1);
        const double k = 2.0 * g.item() / static_cast<double>(p.size());
        DenseTensor dp(p.shape());
        for (std::size_t j = 0; j < p.size(); ++j) dp[j] = k * (p[j] - t[j]);
        accumulate(n.inputs[1], kernels::scale(dp, -1.0));
        accumulate(n.inputs[0], std::move(dp));
        break;
      }
      case Op::gather_cols: {
        const auto& cols = std::get<IndexAux>(n.aux).indices;
        const DenseTensor& x = in(0);
        DenseTensor dx(x.shape());
        const std::size_t rows = x.rows(), c = x.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols.size(); ++j) dx[r * c + cols[j]] += g.at(r, j);
        }
        accumulate(n.inputs[0], std::move(dx));
        break;
      }
      case Op::concat_cols: {
        const std::size_t rows = in(0).rows(), ca = in(0).cols(), cb = in(1).cols();
        DenseTensor da(in(0).shape()), db(in(1).shape());
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(g.raw() + r * (ca + cb), ca, da.raw() + r * ca);
          std::copy_n(g.raw() + r * (ca + cb) + ca, cb, db.raw() + r * cb);
        }
        accumulate(n.inputs[0], std::move(da));
        accumulate(n.inputs[1], std::move(db));
        break;
      }
      case Op::reshape:
        accumulate(n.inputs[0], g.reshaped(in(0).shape()));
        break;
    }
  }
  // Parameters the seed does not depend on still get a (zero) gradient.
  for (const auto& [pid, nid] : param_nodes_) {
    if (!store.contains(pid)) store.set(pid, DenseTensor(nodes_[nid].value.shape()));
  }
  return store;
}

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var operator*(double alpha, Var a) { return a.tape->scale(a, alpha); }

FdReport finite_difference_check(const LossBuilder& f, std::span<Param* const> params, const FdOptions& options) {
  if (!(options.step > 0.0)) throw InputError("finite difference step must be positive");
  GradientStore grads;
  {
    Tape tape;
    Var loss = f(tape);
    if (!std::isfinite(loss.value().item())) throw NumericError("finite_difference_check: non-finite loss");
    grads = tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape;
    const double v = f(tape).value().item();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite loss");
    return v;
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (param slot, element)
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) coords.emplace_back(p, i);
  }
  if (options.max_coordinates != 0 && options.max_coordinates < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
  }

  FdReport report;
  for (auto [p, i] : coords) {
    Param& param = *params[p];
    const double saved = param.value[i];
    param.value[i] = saved + options.step;
    const double up = evaluate();
    param.value[i] = saved - options.step;
    const double down = evaluate();
    param.value[i] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const DenseTensor* g = grads.find(param.id);
    const double analytic = g != nullptr ? (*g)[i] : 0.0;
    const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    report.coordinates.push_back({param.id, i, analytic, numeric, rel});
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.pass = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace monet::ad
