#include "monet/complexity.hpp"

#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "monet/error.hpp"
#include "monet/ledger.hpp"

namespace monet::complexity {

namespace {

std::uint64_t exact_div(std::uint64_t a, std::uint64_t b, const char* what) {
  if (b == 0 || a % b != 0) {
    throw ConfigError(std::string(what) + ": " + std::to_string(a) + " is not divisible by " + std::to_string(b));
  }
  return a / b;
}

void require_single_stage(const ModelConfig& config) {
  if (config.multi_stage()) {
    throw ConfigError("closed-form counts cover single-stage configs only; \"" + config.name + "\" is multi-stage");
  }
  config.validate();
}

template <class Map>
std::uint64_t sum_values(const Map& m) {
  std::uint64_t s = 0;
  for (const auto& [k, v] : m) s += v;
  return s;
}

}  // namespace

std::uint64_t params_ppel(std::uint64_t c, std::uint64_t p) { return (3 * p * p + 1) * c + c * (4 * c + 1); }

std::uint64_t params_ppel_level1(std::uint64_t c, std::uint64_t p) { return (3 * (2 * p) * (2 * p) + 1) * c; }

std::uint64_t params_pl1(std::uint64_t c, std::uint64_t s) {
  const std::uint64_t l = exact_div(c, s, "PL1 low rank");
  return 2 * c * c + 2 * c * l + 3 * c + l;
}

std::uint64_t params_pl2(std::uint64_t c, std::uint64_t r, std::uint64_t s) {
  const std::uint64_t m = r * c;
  const std::uint64_t l = exact_div(m, s, "PL2 low rank");
  // A, b1, D, b2, B, b3, C, b4
  return m * c + m + l * c + l + m * l + m + c * m + c;
}

std::uint64_t params_fcl(std::uint64_t c, std::uint64_t k) { return k * (c + 1); }

std::uint64_t flops_ppel(std::uint64_t c, std::uint64_t p, std::uint64_t np) { return 4 * c * np * (3 * p * p + c); }

std::uint64_t flops_ppel_level1(std::uint64_t c, std::uint64_t p, std::uint64_t np) { return 12 * p * p * c * np; }

std::uint64_t flops_pb(std::uint64_t c, std::uint64_t r, std::uint64_t s, std::uint64_t np) {
  // N_p c²(2r + 2 + (r² + r + 2)/s) + N_p c(1 + r), with every division exact.
  const std::uint64_t quad = exact_div(c * c * (r * r + r + 2), s, "FLOPs_PB");
  return np * (c * c * (2 * r + 2) + quad) + np * c * (1 + r);
}

std::uint64_t flops_fcl(std::uint64_t c, std::uint64_t k, std::uint64_t np) { return np * c * k; }

std::uint64_t token_count(const ModelConfig& config) {
  const std::uint64_t cell = 2 * config.patch_size;
  return exact_div(config.image_height, cell, "image height") * exact_div(config.image_width, cell, "image width");
}

CostReport params_closed_form(const ModelConfig& config) {
  require_single_stage(config);
  const std::uint64_t c = config.hidden, n = config.depth;
  CostReport r;
  r.config = config;
  r.params_by_module["ppel"] = params_ppel(c, config.patch_size);
  if (config.pyramid) r.params_by_module["ppel_level1"] = params_ppel_level1(c, config.patch_size);
  const std::uint64_t second =
      config.second_layer == "linear" ? c * (c + 1) : params_pl2(c, config.expansion, config.shrinkage);
  r.params_by_module["blocks"] = n * (params_pl1(c, config.shrinkage) + second);
  if (config.use_norm) r.params_by_module["norm"] = n * 2 * c;
  if (config.num_classes > 0) r.params_by_module["head"] = params_fcl(c, config.num_classes);
  r.params_total = sum_values(r.params_by_module);
  return r;
}

CostReport flops_closed_form(const ModelConfig& config) {
  require_single_stage(config);
  const std::uint64_t c = config.hidden, n = config.depth, np = token_count(config);
  CostReport r;
  r.config = config;
  r.flops_by_module["ppel"] = flops_ppel(c, config.patch_size, np);
  if (config.pyramid) r.flops_by_module["ppel_level1"] = flops_ppel_level1(c, config.patch_size, np);
  std::uint64_t block = 0;
  if (config.second_layer == "linear") {
    // first Mu-Layer alone, plus a c×c linear per token
    const std::uint64_t l = exact_div(c, config.shrinkage, "low rank");
    block = np * (2 * c * c + 2 * c * l + c) + np * c * c;
  } else {
    block = flops_pb(c, config.expansion, config.shrinkage, np);
  }
  r.flops_by_module["blocks"] = n * block;
  if (config.num_classes > 0) r.flops_by_module["head"] = flops_fcl(c, config.num_classes, np);
  r.flops_total = sum_values(r.flops_by_module);
  return r;
}

CostReport closed_form(const ModelConfig& config) {
  CostReport r = params_closed_form(config);
  const CostReport f = flops_closed_form(config);
  r.flops_total = f.flops_total;
  r.flops_by_module = f.flops_by_module;
  return r;
}

std::string module_of(const std::string& name) {
  if (name.rfind("embed.level1.", 0) == 0) return "ppel_level1";
  if (name.rfind("embed.", 0) == 0) return "ppel";
  if (name.rfind("head.", 0) == 0) return "head";
  if (name.find(".transition.") != std::string::npos) return "transition";
  if (name.find(".norm.") != std::string::npos) return "norm";
  if (name.find(".blocks.") != std::string::npos) return "blocks";
  throw InputError("module_of: unrecognized parameter name \"" + name + "\"");
}

CostReport empirical_count(const MonetModel& model) {
  CostReport r;
  r.config = model.config;
  for (const auto& np : model.parameters()) r.params_by_module[module_of(np.name)] += np.param->value.size();
  r.params_total = sum_values(r.params_by_module);

  const ModelConfig& cfg = model.config;
  const DenseTensor image({1, cfg.image_height, cfg.image_width, cfg.in_channels});
  FlopLedger ledger;
  {
    LedgerScope scope(ledger);
    (void)forward(model, image);
  }
  r.flops_by_module = ledger.mac_flops_by_module();
  std::erase_if(r.flops_by_module, [](const auto& kv) { return kv.second == 0; });
  r.flops_total = ledger.mac_flops();
  r.auxiliary_by_module = ledger.auxiliary_flops_by_module();
  std::erase_if(r.auxiliary_by_module, [](const auto& kv) { return kv.second == 0; });
  r.auxiliary_flops = ledger.auxiliary_flops();
  return r;
}

std::string CostReport::to_json() const {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(config.to_json());
  j["params_total"] = params_total;
  j["params_by_module"] = params_by_module;
  j["flops_total"] = flops_total;
  j["flops_by_module"] = flops_by_module;
  j["auxiliary_flops"] = auxiliary_flops;
  j["auxiliary_by_module"] = auxiliary_by_module;
  return j.dump(2);
}

std::string CostReport::to_table() const {
  std::ostringstream os;
  auto section = [&](const char* title, const std::map<std::string, std::uint64_t>& m, std::uint64_t total) {
    os << title << '\n';
    for (const auto& [k, v] : m) os << "  " << std::left << std::setw(14) << k << std::right << std::setw(16) << v << '\n';
    os << "  " << std::left << std::setw(14) << "total" << std::right << std::setw(16) << total << '\n';
  };
  os << "config: " << config.name << '\n';
  section("parameters", params_by_module, params_total);
  section("MAC flops", flops_by_module, flops_total);
  if (auxiliary_flops > 0) section("auxiliary flops", auxiliary_by_module, auxiliary_flops);
  return os.str();
}

}  // namespace monet::complexity
