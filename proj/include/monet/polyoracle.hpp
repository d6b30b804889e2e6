#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "monet/error.hpp"
#include "monet/kernels.hpp"
#include "monet/layers.hpp"
#include "monet/model.hpp"

/// Symbolic execution of the network with polynomial-valued tensor elements.
namespace monet::poly {

using Exponents = std::vector<std::uint32_t>;

inline constexpr std::size_t kNoCap = std::numeric_limits<std::size_t>::max();

template <class Coeff>
Coeff coeff_from_double(double v) {
  if (!std::isfinite(v)) throw NumericError("symbolic: non-finite weight");
  return Coeff(v);  // mpq_class(double) is exact
}

inline double coeff_to_double(const mpq_class& c) { return c.get_d(); }
inline double coeff_to_double(double c) { return c; }

/// Sparse multivariate polynomial; zero coefficients are never stored.
template <class Coeff>
class MultiPoly {
 public:
  using Terms = std::map<Exponents, Coeff>;

  MultiPoly() = default;
  explicit MultiPoly(std::size_t nvars) : nvars_(nvars) {}

  static MultiPoly constant(std::size_t nvars, const Coeff& c) {
    MultiPoly p(nvars);
    p.add_term(Exponents(nvars, 0), c);
    return p;
  }
  static MultiPoly variable(std::size_t nvars, std::size_t index) {
    if (index >= nvars) throw InputError("poly: variable index out of range");
    Exponents e(nvars, 0);
    e[index] = 1;
    MultiPoly p(nvars);
    p.add_term(e, Coeff(1));
    return p;
  }

  std::size_t nvars() const noexcept { return nvars_; }
  const Terms& terms() const noexcept { return terms_; }
  std::size_t term_count() const noexcept { return terms_.size(); }
  bool is_zero() const noexcept { return terms_.empty(); }

  /// Total degree; the zero polynomial reports 0.
  std::size_t degree() const {
    std::size_t best = 0;
    for (const auto& [e, c] : terms_) {
      std::size_t d = 0;
      for (auto k : e) d += k;
      best = std::max(best, d);
    }
    return best;
  }

  Coeff coefficient(const Exponents& e) const {
    auto it = terms_.find(e);
    return it == terms_.end() ? Coeff(0) : it->second;
  }

  void add_term(const Exponents& e, const Coeff& c) {
    if (e.size() != nvars_) throw DimensionError("poly: exponent vector length differs from variable count");
    Coeff value = c;
    if constexpr (std::is_same_v<Coeff, mpq_class>) value.canonicalize();  // callers may pass n/d unreduced
    if (value == 0) return;
    auto [it, inserted] = terms_.try_emplace(e, value);
    if (!inserted) {
      it->second += value;
      if (it->second == 0) terms_.erase(it);
    }
  }

  /// this += alpha * other
  void add_scaled(const MultiPoly& other, const Coeff& alpha) {
    check_vars(other);
    if (alpha == 0) return;
    for (const auto& [e, c] : other.terms_) add_term(e, Coeff(c * alpha));
  }

  MultiPoly& operator+=(const MultiPoly& o) {
    add_scaled(o, Coeff(1));
    return *this;
  }
  MultiPoly& operator-=(const MultiPoly& o) {
    add_scaled(o, Coeff(-1));
    return *this;
  }

  MultiPoly scaled(const Coeff& alpha) const {
    MultiPoly out(nvars_);
    out.add_scaled(*this, alpha);
    return out;
  }

  /// Product; throws CapacityError once the partial result holds more than `term_cap` terms.
  MultiPoly multiply(const MultiPoly& o, std::size_t term_cap = kNoCap) const {
    check_vars(o);
    MultiPoly out(nvars_);
    Exponents e(nvars_);
    for (const auto& [ea, ca] : terms_) {
      for (const auto& [eb, cb] : o.terms_) {
        for (std::size_t i = 0; i < nvars_; ++i) e[i] = ea[i] + eb[i];
        out.add_term(e, Coeff(ca * cb));
        if (out.terms_.size() > term_cap) {
          throw CapacityError("symbolic: product exceeds the term cap of " + std::to_string(term_cap));
        }
      }
    }
    return out;
  }

  Coeff evaluate(std::span<const Coeff> point) const {
    if (point.size() != nvars_) throw DimensionError("poly: evaluation point has the wrong length");
    Coeff sum(0);
    for (const auto& [e, c] : terms_) {
      Coeff term = c;
      for (std::size_t i = 0; i < nvars_; ++i) {
        for (std::uint32_t k = 0; k < e[i]; ++k) term *= point[i];
      }
      sum += term;
    }
    return sum;
  }

  /// Human-readable form with variables x0, x1, ...
  std::string to_string() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (const auto& [e, c] : terms_) {
      if (!s.empty()) s += " + ";
      s += coeff_string(c);
      for (std::size_t i = 0; i < nvars_; ++i) {
        if (e[i] == 0) continue;
        s += "*x" + std::to_string(i);
        if (e[i] > 1) s += "^" + std::to_string(e[i]);
      }
    }
    return s;
  }

  friend MultiPoly operator+(MultiPoly a, const MultiPoly& b) { return a += b; }
  friend MultiPoly operator-(MultiPoly a, const MultiPoly& b) { return a -= b; }
  friend MultiPoly operator*(const MultiPoly& a, const MultiPoly& b) { return a.multiply(b); }
  friend bool operator==(const MultiPoly& a, const MultiPoly& b) {
    return a.nvars_ == b.nvars_ && a.terms_ == b.terms_;
  }

 private:
  void check_vars(const MultiPoly& o) const {
    if (o.nvars_ != nvars_) {
      throw DimensionError("poly: variable counts differ (" + std::to_string(nvars_) + " vs " +
                           std::to_string(o.nvars_) + ")");
    }
  }
  static std::string coeff_string(const mpq_class& c) { return c.get_str(); }
  static std::string coeff_string(double c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", c);
    return buf;
  }

  std::size_t nvars_ = 0;
  Terms terms_;
};

using RationalPoly = MultiPoly<mpq_class>;
using RealPoly = MultiPoly<double>;

/// Tensor of polynomials with the DenseTensor shape law.
template <class Coeff>
struct PolyTensor {
  Shape shape;
  std::size_t nvars = 0;
  std::vector<MultiPoly<Coeff>> elements;

  static PolyTensor zeros(Shape s, std::size_t nvars) {
    PolyTensor t;
    t.elements.assign(shape_volume(s), MultiPoly<Coeff>(nvars));
    t.shape = std::move(s);
    t.nvars = nvars;
    return t;
  }
  /// Every element a distinct fresh variable, numbered in row-major order.
  static PolyTensor variables(Shape s) {
    const std::size_t n = shape_volume(s);
    PolyTensor t = zeros(std::move(s), n);
    for (std::size_t i = 0; i < n; ++i) t.elements[i] = MultiPoly<Coeff>::variable(n, i);
    return t;
  }

  std::size_t size() const noexcept { return elements.size(); }
  std::size_t cols() const noexcept { return shape.empty() ? 1 : shape.back(); }
  std::size_t total_terms() const {
    std::size_t n = 0;
    for (const auto& e : elements) n += e.term_count();
    return n;
  }
  std::size_t max_degree() const {
    std::size_t d = 0;
    for (const auto& e : elements) d = std::max(d, e.degree());
    return d;
  }
  /// Evaluates each element at a numeric point.
  std::vector<Coeff> evaluate(std::span<const Coeff> point) const {
    std::vector<Coeff> out;
    out.reserve(elements.size());
    for (const auto& e : elements) out.push_back(e.evaluate(point));
    return out;
  }
};

struct SymbolicOptions {
  std::size_t term_cap = 1'000'000;
};

/// Backend for the generic layer templates. Layer norms act as the identity.
template <class Coeff>
class SymbolicBackend {
 public:
  using Value = PolyTensor<Coeff>;
  using Poly = MultiPoly<Coeff>;

  explicit SymbolicBackend(SymbolicOptions options = {}) : options_(options) {}

  Value linear(const Value& x, const Param& w, const Param& b) {
    const DenseTensor& W = w.value;
    if (W.rank() != 2 || x.shape.empty() || x.cols() != W.shape()[1]) {
      throw DimensionError("symbolic linear: input " + shape_string(x.shape) + " vs weight " +
                           shape_string(W.shape()));
    }
    const std::size_t m = W.shape()[0], d = W.shape()[1], rows = x.size() / d;
    Shape out_shape = x.shape;
    out_shape.back() = m;
    Value out = Value::zeros(out_shape, x.nvars);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < m; ++i) {
        Poly acc = Poly::constant(x.nvars, coeff_from_double<Coeff>(b.value[i]));
        for (std::size_t j = 0; j < d; ++j) {
          const double wij = W.at(i, j);
          if (wij != 0.0) acc.add_scaled(x.elements[r * d + j], coeff_from_double<Coeff>(wij));
        }
        out.elements[r * m + i] = std::move(acc);
      }
    }
    return checked(std::move(out));
  }

  Value hadamard(const Value& a, const Value& b) {
    same_shape(a, b, "hadamard");
    Value out = Value::zeros(a.shape, a.nvars);
    for (std::size_t i = 0; i < a.size(); ++i) out.elements[i] = a.elements[i].multiply(b.elements[i], options_.term_cap);
    return checked(std::move(out));
  }

  Value add(const Value& a, const Value& b) {
    same_shape(a, b, "add");
    Value out = a;
    for (std::size_t i = 0; i < a.size(); ++i) out.elements[i] += b.elements[i];
    return checked(std::move(out));
  }

  Value shift(const Value& x) {
    if (x.shape.size() != 4) throw DimensionError("symbolic shift: expected a token grid, got " + shape_string(x.shape));
    // Shift a tensor of source indices with the numeric kernel, then gather.
    DenseTensor index(x.shape);
    for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<double>(i);
    const DenseTensor src = kernels::spatial_shift(index);
    Value out = Value::zeros(x.shape, x.nvars);
    for (std::size_t i = 0; i < out.size(); ++i) out.elements[i] = x.elements[static_cast<std::size_t>(src[i])];
    return out;
  }

  Value layernorm(const Value& x, const LayerNormParams&) { return x; }

  Value conv2d(const Value& x, const ConvParams& c) {
    const DenseTensor& w = c.weight.value;
    if (x.shape.size() != 4 || w.rank() != 4 || w.shape()[3] != x.shape[3]) {
      throw DimensionError("symbolic conv2d: input " + shape_string(x.shape) + " vs kernel " + shape_string(w.shape()));
    }
    const std::size_t B = x.shape[0], H = x.shape[1], W = x.shape[2], cin = x.shape[3];
    const std::size_t cout = w.shape()[0], kh = w.shape()[1], kw = w.shape()[2], st = c.stride;
    if (st == 0 || kh > H || kw > W || (H - kh) % st != 0 || (W - kw) % st != 0) {
      throw DimensionError("symbolic conv2d: kernel/stride do not tile the input");
    }
    const std::size_t oh = (H - kh) / st + 1, ow = (W - kw) / st + 1;
    Value out = Value::zeros({B, oh, ow, cout}, x.nvars);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t co = 0; co < cout; ++co) {
            Poly acc = Poly::constant(x.nvars, coeff_from_double<Coeff>(c.bias.value[co]));
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx)
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  const double wv = w[((co * kh + ky) * kw + kx) * cin + ci];
                  if (wv == 0.0) continue;
                  const std::size_t xi = ((b * H + oy * st + ky) * W + ox * st + kx) * cin + ci;
                  acc.add_scaled(x.elements[xi], coeff_from_double<Coeff>(wv));
                }
            out.elements[((b * oh + oy) * ow + ox) * cout + co] = std::move(acc);
          }
    return checked(std::move(out));
  }

  Value avgpool(const Value& x) {
    if (x.shape.size() != 4) throw DimensionError("symbolic avgpool: expected a token grid");
    const std::size_t B = x.shape[0], T = x.shape[1] * x.shape[2], C = x.shape[3];
    Value out = Value::zeros({B, C}, x.nvars);
    const Coeff inv = Coeff(1) / Coeff(static_cast<double>(T));
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) out.elements[b * C + c].add_scaled(x.elements[(b * T + t) * C + c], inv);
    return checked(std::move(out));
  }

  static const Shape& shape(const Value& x) { return x.shape; }

 private:
  static void same_shape(const Value& a, const Value& b, const char* op) {
    if (a.shape != b.shape || a.nvars != b.nvars) {
      throw DimensionError(std::string("symbolic ") + op + ": shape mismatch " + shape_string(a.shape) + " vs " +
                           shape_string(b.shape));
    }
  }
  Value checked(Value v) const {
    if (v.total_terms() > options_.term_cap) {
      throw CapacityError("symbolic: tensor holds " + std::to_string(v.total_terms()) + " terms, cap is " +
                          std::to_string(options_.term_cap));
    }
    return v;
  }

  SymbolicOptions options_;
};

template <class Coeff>
PolyTensor<Coeff> symbolic_forward(const MuLayerParams& p, const PolyTensor<Coeff>& x, SymbolicOptions o = {}) {
  SymbolicBackend<Coeff> be(o);
  return mu_layer_forward(be, p, x);
}

template <class Coeff>
PolyTensor<Coeff> symbolic_forward(const PolyBlockParams& p, const PolyTensor<Coeff>& x, SymbolicOptions o = {}) {
  SymbolicBackend<Coeff> be(o);
  return poly_block_forward(be, p, x);
}

template <class Coeff>
PolyTensor<Coeff> symbolic_forward(const std::vector<PolyBlockParams>& blocks, const PolyTensor<Coeff>& x,
                                   SymbolicOptions o = {}) {
  SymbolicBackend<Coeff> be(o);
  PolyTensor<Coeff> y = x;
  for (const auto& b : blocks) y = poly_block_forward(be, b, y);
  return y;
}

template <class Coeff>
PolyTensor<Coeff> symbolic_forward(const MonetModel& m, const PolyTensor<Coeff>& images, SymbolicOptions o = {}) {
  SymbolicBackend<Coeff> be(o);
  return forward(be, m, images);
}

struct DegreeVerdict {
  std::size_t max_degree = 0;
  bool cross_term_found = false;
  std::size_t term_count = 0;
  std::size_t expected_max_degree = 0;
  bool require_cross_terms = false;
  bool pass = false;

  std::string to_json() const;
};

/// Variables are numbered token-major with `channels` variables per token. A cross term is a
/// monomial with a nonzero coefficient that involves two distinct channels of one token.
/// Passes iff max_degree <= expected and, when required, a cross term exists.
template <class Coeff>
DegreeVerdict verify_degree(const PolyTensor<Coeff>& out, std::size_t channels, std::size_t expected,
                            bool require_cross_terms) {
  if (channels == 0) throw InputError("verify_degree: channel count must be positive");
  DegreeVerdict v;
  v.expected_max_degree = expected;
  v.require_cross_terms = require_cross_terms;
  std::vector<std::size_t> seen(out.nvars / channels + 1, kNoCap);
  for (const auto& el : out.elements) {
    v.term_count += el.term_count();
    v.max_degree = std::max(v.max_degree, el.degree());
    if (v.cross_term_found) continue;
    for (const auto& [e, c] : el.terms()) {
      std::fill(seen.begin(), seen.end(), kNoCap);
      for (std::size_t i = 0; i < e.size() && !v.cross_term_found; ++i) {
        if (e[i] == 0) continue;
        std::size_t& first = seen[i / channels];
        if (first == kNoCap) {
          first = i;
        } else if (first != i) {
          v.cross_term_found = true;
        }
      }
      if (v.cross_term_found) break;
    }
  }
  v.pass = v.max_degree <= expected && (!require_cross_terms || v.cross_term_found);
  return v;
}

/// Overwrites every parameter with a uniformly drawn nonzero integer in [-range, range].
template <class T>
void randomize_integer(T& target, std::mt19937_64& rng, int range) {
  if (range < 1) throw InputError("randomize_integer: range must be at least 1");
  std::uniform_int_distribution<int> dist(1, 2 * range);
  for_each_param(target, "", [&](const std::string&, Param& p) {
    for (double& v : p.value.data()) {
      const int k = dist(rng);
      v = static_cast<double>(k <= range ? k - range - 1 : k - range);
    }
  });
}

enum class DegreeTarget { mu_layer, block, stack };

/// One degree measurement on freshly drawn integer weights.
///   mu_layer: single token, d = m = channels, l = o = 1, no shift.
///   block / stack: a grid×grid token grid of width `channels` with expansion = shrinkage = 1.
struct DegreeExperiment {
  DegreeTarget target = DegreeTarget::block;
  std::size_t blocks = 1;
  std::size_t channels = 4;
  std::size_t grid = 1;
  bool linear_second_layer = false;
  bool rational = true;
  std::uint64_t seed = 0;
  int weight_range = 3;
  std::size_t term_cap = 1'000'000;
};

/// 2 for a Mu-Layer; 4^N for N blocks (2^N when the second layer is linear).
std::size_t expected_degree(const DegreeExperiment& e);

/// Runs the experiment and requires the max degree to equal the expected degree exactly
/// (the generic-weight case). Cross terms are required for every target.
DegreeVerdict run_degree_experiment(const DegreeExperiment& e);

DegreeTarget parse_degree_target(const std::string& name);

}  // namespace monet::poly
