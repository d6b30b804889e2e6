#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monet/autodiff.hpp"
#include "monet/layers.hpp"

/// Polynomial neural ODEs: fit a degree-2 vector field to trajectory data and read off its equations.
namespace monet::node {

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;

  std::size_t size() const noexcept { return times.size(); }
  std::size_t dim() const noexcept { return states.empty() ? 0 : states.front().size(); }
  /// Strictly increasing times, one finite state of common dimension per time.
  void validate() const;
};

/// dx/dt as a function of (t, x).
using Field = std::function<std::vector<double>(double, std::span<const double>)>;

/// Classical RK4 between consecutive times with `substeps` equal steps per interval.
/// A non-finite state raises DivergenceError carrying the time reached.
Trajectory rk4_integrate(const Field& f, std::span<const double> x0, std::span<const double> times,
                         std::size_t substeps = 1);

struct LotkaVolterra {
  double alpha = 1.56;
  double beta = 1.12;
  double delta = 3.10;
  double gamma = 1.21;
};

/// dx/dt = αx − βxy, dy/dt = −δy + γxy, integrated on a fine grid and sampled at n uniform
/// times over [0, t_end].
Trajectory generate_lotka_volterra(const LotkaVolterra& p, std::span<const double> x0, std::size_t n,
                                   double t_end, std::size_t fine_substeps = 200);

/// Trainable right-hand side usable both numerically and on a tape. States are rows.
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual std::size_t dim() const = 0;
  virtual ad::Var rhs(ad::Tape& tape, ad::Var x) const = 0;
  virtual std::vector<double> eval(std::span<const double> x) const = 0;
  virtual std::vector<Param*> trainable() = 0;
};

/// dx/dt = W · φ(x) with the monomial basis φ = [x₁..xₙ, x_i x_j (i ≤ j)].
class PolyODEModel final : public VectorField {
 public:
  explicit PolyODEModel(std::size_t n);

  std::size_t dim() const override { return n_; }
  std::size_t basis_size() const noexcept { return n_ + quad_.size(); }
  /// (i, j) per quadratic basis entry, in basis order after the n linear entries.
  const std::vector<std::pair<std::size_t, std::size_t>>& quadratic_terms() const noexcept { return quad_; }
  /// Variable indices of a basis entry: one index for linear terms, two for quadratics.
  std::vector<std::size_t> basis_variables(std::size_t b) const;

  /// (n × basis) coefficients; row i holds dx_i/dt.
  DenseTensor& coefficients() noexcept { return w_.value; }
  const DenseTensor& coefficients() const noexcept { return w_.value; }
  double coefficient(std::size_t row, std::size_t basis) const { return w_.value.at(row, basis); }
  void set_coefficient(std::size_t row, std::size_t basis, double v) { w_.value.at(row, basis) = v; }

  std::vector<double> features(std::span<const double> x) const;
  ad::Var rhs(ad::Tape& tape, ad::Var x) const override;
  std::vector<double> eval(std::span<const double> x) const override;
  std::vector<Param*> trainable() override { return {&w_}; }

 private:
  std::size_t n_;
  std::vector<std::pair<std::size_t, std::size_t>> quad_;
  std::vector<std::size_t> left_, right_;
  Param w_;
};

/// Right-hand side given by one bias-free Mu-Layer (d = o = n, no spatial shift).
class MuLayerField final : public VectorField {
 public:
  MuLayerField(std::size_t n, std::size_t hidden, std::size_t low_rank, std::uint64_t seed);

  std::size_t dim() const override { return layer_.input_width(); }
  ad::Var rhs(ad::Tape& tape, ad::Var x) const override;
  std::vector<double> eval(std::span<const double> x) const override;
  std::vector<Param*> trainable() override { return {&layer_.A, &layer_.D, &layer_.B, &layer_.C}; }
  const MuLayerParams& layer() const noexcept { return layer_; }
  MuLayerParams& layer() noexcept { return layer_; }

 private:
  MuLayerParams layer_;
};

/// Expands a Mu-Layer field into the monomial basis through the symbolic oracle.
PolyODEModel to_poly_model(const MuLayerField& field);

struct FitOptions {
  double lr = 0.05;
  std::size_t max_epochs = 500;
  double clip_norm = 10.0;
  std::size_t batch = 4;        // shooting segments per Adam step
  std::size_t horizon = 1;      // observation intervals integrated per segment
  std::size_t substeps = 4;     // RK4 steps per observation interval
  double final_lr_ratio = 0.01; // cosine decay of the rate to lr · ratio at max_epochs
  double target_loss = 0.0;     // stop once the full-data loss falls below this (0: never)
  std::size_t max_retries = 10; // rejected steps allowed, each halving the rate
  std::uint64_t seed = 0;
};

struct FitResult {
  /// Full-data loss before training, then after each epoch.
  std::vector<double> loss_curve;
  std::size_t epochs = 0;
  std::size_t rejected_steps = 0;
};

/// Multiple shooting: every observed state starts a segment that is integrated `horizon`
/// intervals forward and compared with the observations it reaches (mean squared error).
ad::Var trajectory_loss(ad::Tape& tape, const VectorField& field, const Trajectory& data,
                        std::span<const std::size_t> segment_starts, const FitOptions& options);
/// Loss over every segment, evaluated without keeping gradients.
double full_loss(const VectorField& field, const Trajectory& data, const FitOptions& options);

/// Adam on the trajectory loss. A step that produces a non-finite state, loss or gradient is
/// rejected, the rate halved and the step retried; past `max_retries` DivergenceError propagates.
FitResult fit(VectorField& field, const Trajectory& data, const FitOptions& options);

/// Per-dimension equations such as "dx/dt = 1.56·x − 1.12·x·y", dropping |c| < prune_tol.
std::vector<std::string> extract_symbolic(const PolyODEModel& model, double prune_tol = 1e-3);
/// Variable names: x, y, z for n ≤ 3, else x1..xn.
std::vector<std::string> variable_names(std::size_t n);

}  // namespace monet::node
