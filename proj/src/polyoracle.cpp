#include "monet/polyoracle.hpp"

#include <json.hpp>

namespace monet::poly {

std::string DegreeVerdict::to_json() const {
  nlohmann::json j;
  j["max_degree"] = max_degree;
  j["cross_term_found"] = cross_term_found;
  j["term_count"] = term_count;
  j["expected_max_degree"] = expected_max_degree;
  j["pass"] = pass;
  return j.dump();
}

std::size_t expected_degree(const DegreeExperiment& e) {
  if (e.target == DegreeTarget::mu_layer) return 2;
  const std::size_t per_block = e.linear_second_layer ? 2 : 4;
  const std::size_t n = e.target == DegreeTarget::block ? 1 : e.blocks;
  std::size_t d = 1;
  for (std::size_t i = 0; i < n; ++i) d *= per_block;
  return d;
}

DegreeTarget parse_degree_target(const std::string& name) {
  if (name == "mu" || name == "mu-layer") return DegreeTarget::mu_layer;
  if (name == "block") return DegreeTarget::block;
  if (name == "stack") return DegreeTarget::stack;
  throw InputError("unknown degree target \"" + name + "\" (expected mu, block or stack)");
}

namespace {

template <class Coeff>
DegreeVerdict run_typed(const DegreeExperiment& e) {
  std::mt19937_64 rng(e.seed);
  const SymbolicOptions opts{e.term_cap};
  const std::size_t c = e.channels;
  PolyTensor<Coeff> out;
  if (e.target == DegreeTarget::mu_layer) {
    MuLayerParams p = make_mu_layer(c, c, 1, 1, /*shift=*/false);
    randomize_integer(p, rng, e.weight_range);
    out = symbolic_forward(p, PolyTensor<Coeff>::variables({1, c}), opts);
  } else {
    if (e.grid == 0) throw InputError("degree experiment: grid must be positive");
    const std::size_t n = e.target == DegreeTarget::block ? 1 : e.blocks;
    if (n == 0) throw InputError("degree experiment: at least one block is required");
    std::vector<PolyBlockParams> blocks;
    for (std::size_t i = 0; i < n; ++i) {
      blocks.push_back(make_poly_block(c, 1, 1, /*use_norm=*/true, e.linear_second_layer));
      randomize_integer(blocks.back(), rng, e.weight_range);
    }
    out = symbolic_forward(blocks, PolyTensor<Coeff>::variables({1, e.grid, e.grid, c}), opts);
  }
  const std::size_t expected = expected_degree(e);
  DegreeVerdict v = verify_degree(out, c, expected, /*require_cross_terms=*/true);
  v.pass = v.pass && v.max_degree == expected;
  return v;
}

}  // namespace

DegreeVerdict run_degree_experiment(const DegreeExperiment& e) {
  return e.rational ? run_typed<mpq_class>(e) : run_typed<double>(e);
}

}  // namespace monet::poly
