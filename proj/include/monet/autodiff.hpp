#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <unordered_map>
#include <variant>
#include <vector>

#include "monet/kernels.hpp"
#include "monet/param.hpp"
#include "monet/tensor.hpp"

namespace monet::ad {

using NodeId = std::uint32_t;
class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const DenseTensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

enum class Op : std::uint8_t {
  leaf,
  constant,
  matmul,
  linear,
  hadamard,
  add,
  sub,
  scale,
  sum,
  layernorm,
  spatial_shift,
  conv2d,
  avgpool,
  cross_entropy,
  mse,
  gather_cols,
  concat_cols,
  reshape,
};

struct LayerNormAux {
  kernels::LayerNormStats stats;
};
struct ConvAux {
  std::size_t stride;
};
struct ShiftAux {
  bool reversed;
};
struct CrossEntropyAux {
  DenseTensor dlogits;  // d loss / d logits, saved from the forward pass
};
struct IndexAux {
  std::vector<std::size_t> indices;
};
using NodeAux = std::variant<std::monostate, double, LayerNormAux, ConvAux, ShiftAux, CrossEntropyAux, IndexAux>;

struct Node {
  Op op = Op::leaf;
  std::array<NodeId, 3> inputs{};
  std::uint8_t arity = 0;
  DenseTensor value;
  NodeAux aux;
  bool trainable = false;
  ParamId param = 0;
};

/// Gradients keyed by parameter id; each matches its parameter's shape.
class GradientStore {
 public:
  const DenseTensor& at(ParamId id) const;
  const DenseTensor* find(ParamId id) const;
  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  std::size_t size() const { return grads_.size(); }
  void set(ParamId id, DenseTensor g) { grads_[id] = std::move(g); }
  /// Elementwise sum (for data-parallel reduction by the caller).
  void accumulate(const GradientStore& other);
  double global_norm() const;
  void scale(double alpha);

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::unordered_map<ParamId, DenseTensor> grads_;
};

/// Records primitive applications in topological order for one reverse-mode sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf; a parameter used twice on one tape maps to the same node.
  Var param(const Param& p);
  Var leaf(ParamId id, DenseTensor value);
  Var constant(DenseTensor value);

  Var matmul(Var a, Var b);
  Var linear(Var x, Var w, const Var* bias);
  Var hadamard(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double alpha);
  Var sum(Var a);
  Var layernorm(Var x, Var gamma, Var beta, double eps);
  Var spatial_shift(Var x, bool reversed = false);
  Var conv2d(Var x, Var w, const Var* bias, std::size_t stride);
  Var avgpool(Var x);
  Var cross_entropy(Var logits, std::span<const std::size_t> targets, double smoothing);
  /// Mean of squared differences over all elements.
  Var mse(Var prediction, Var target);
  Var gather_cols(Var x, std::vector<std::size_t> cols);
  Var concat_cols(Var a, Var b);
  Var reshape(Var x, Shape shape);

  /// Reverse sweep from a scalar node. The tape itself is left untouched.
  GradientStore backward(Var seed) const;

  const Node& node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  Var push(Node node);
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<ParamId, NodeId> param_nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(double alpha, Var a);

struct FdCoordinate {
  ParamId param;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct FdReport {
  std::vector<FdCoordinate> coordinates;
  double max_rel_error = 0.0;
  bool pass = false;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

struct FdOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  /// 0 checks every coordinate; otherwise this many coordinates drawn uniformly.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

/// Central-difference check of reverse-mode gradients. Relative error per coordinate is
/// |g_ad - g_fd| / max(1, |g_fd|); passes iff the maximum stays below the tolerance.
FdReport finite_difference_check(const LossBuilder& f, std::span<Param* const> params, const FdOptions& options);

}  // namespace monet::ad
