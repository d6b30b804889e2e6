#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "monet/model.hpp"

/// Closed-form parameter/FLOP counts and their empirical counterparts.
///
/// FLOPs are multiply-accumulate units: matmuls, linears and convolutions cost one per MAC,
/// Hadamard products one per element, adds and bias adds nothing. Module keys:
///   ppel         fine embedding path (p×p patches, then the 2×2 reduction)
///   ppel_level1  coarse 2p×2p path of the pyramid
///   blocks       both Mu-Layers of every Poly-Block
///   norm         layer-norm affine parameters
///   transition   between-stage downsamplers (multi-stage only)
///   head         classifier
namespace monet::complexity {

struct CostReport {
  ModelConfig config;
  std::uint64_t params_total = 0;
  std::map<std::string, std::uint64_t> params_by_module;
  std::uint64_t flops_total = 0;
  std::map<std::string, std::uint64_t> flops_by_module;
  /// Normalization and pooling work, kept outside the MAC total.
  std::uint64_t auxiliary_flops = 0;
  std::map<std::string, std::uint64_t> auxiliary_by_module;

  std::string to_json() const;
  /// Two-column table for terminals.
  std::string to_table() const;
};

// Individual terms. c = width, p = patch, s = shrinkage, r = expansion, k = classes, np = tokens.
std::uint64_t params_ppel(std::uint64_t c, std::uint64_t p);
std::uint64_t params_ppel_level1(std::uint64_t c, std::uint64_t p);
std::uint64_t params_pl1(std::uint64_t c, std::uint64_t s);
/// Second Mu-Layer. Summed term by term from the layer shapes, so the bias part is
/// 2rc + rc/s + c.
std::uint64_t params_pl2(std::uint64_t c, std::uint64_t r, std::uint64_t s);
std::uint64_t params_fcl(std::uint64_t c, std::uint64_t k);
std::uint64_t flops_ppel(std::uint64_t c, std::uint64_t p, std::uint64_t np);
std::uint64_t flops_ppel_level1(std::uint64_t c, std::uint64_t p, std::uint64_t np);
std::uint64_t flops_pb(std::uint64_t c, std::uint64_t r, std::uint64_t s, std::uint64_t np);
std::uint64_t flops_fcl(std::uint64_t c, std::uint64_t k, std::uint64_t np);

/// Token count on the block grid: (H / 2p)(W / 2p).
std::uint64_t token_count(const ModelConfig& config);

/// Parameter breakdown from the closed forms. Multi-stage configs raise ConfigError.
CostReport params_closed_form(const ModelConfig& config);
/// FLOP breakdown from the closed forms at the configured image size.
CostReport flops_closed_form(const ModelConfig& config);
/// Both of the above in one report.
CostReport closed_form(const ModelConfig& config);

/// Parameters by enumeration; FLOPs from the ledger of one batch-1 forward pass on a zero image.
CostReport empirical_count(const MonetModel& model);

/// Module bucket for a parameter name produced by for_each_param.
std::string module_of(const std::string& param_name);

}  // namespace monet::complexity
