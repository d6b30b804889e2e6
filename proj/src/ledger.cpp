#include "monet/ledger.hpp"

#include <numeric>

namespace monet {

namespace {

thread_local FlopLedger* t_ledger = nullptr;
thread_local std::vector<std::string> t_scope;

std::string module_of(const std::string& scope) {
  const auto dot = scope.find('.');
  return dot == std::string::npos ? scope : scope.substr(0, dot);
}

}  // namespace

std::string_view op_class_name(OpClass c) {
  switch (c) {
    case OpClass::add: return "add";
    case OpClass::multiply: return "multiply";
    case OpClass::mac: return "mac";
    case OpClass::divide: return "divide";
    case OpClass::sqrt: return "sqrt";
    case OpClass::compare: return "compare";
    case OpClass::other: return "other";
  }
  return "other";
}

std::string_view kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::matmul: return "matmul";
    case KernelKind::linear: return "linear";
    case KernelKind::bias_add: return "bias_add";
    case KernelKind::hadamard: return "hadamard";
    case KernelKind::add: return "add";
    case KernelKind::scale: return "scale";
    case KernelKind::layernorm: return "layernorm";
    case KernelKind::conv2d: return "conv2d";
    case KernelKind::spatial_shift: return "spatial_shift";
    case KernelKind::avgpool: return "avgpool";
    case KernelKind::cross_entropy: return "cross_entropy";
    case KernelKind::reduce: return "reduce";
    case KernelKind::unknown: return "unknown";
  }
  return "unknown";
}

std::uint64_t OpCensus::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

OpCensus& OpCensus::operator+=(const OpCensus& o) {
  for (std::size_t i = 0; i < kOpClassCount; ++i) counts[i] += o.counts[i];
  return *this;
}

void FlopLedger::record(LedgerEntry entry) { entries_.push_back(std::move(entry)); }

std::uint64_t FlopLedger::mac_flops() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) n += e.auxiliary ? 0 : e.flops;
  return n;
}

std::uint64_t FlopLedger::auxiliary_flops() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) n += e.auxiliary ? e.flops : 0;
  return n;
}

std::map<std::string, std::uint64_t> FlopLedger::mac_flops_by_module() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : entries_) {
    if (!e.auxiliary) out[module_of(e.scope)] += e.flops;
  }
  return out;
}

std::map<std::string, std::uint64_t> FlopLedger::auxiliary_flops_by_module() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : entries_) {
    if (e.auxiliary) out[module_of(e.scope)] += e.flops;
  }
  return out;
}

OpCensus FlopLedger::census() const {
  OpCensus c;
  for (const auto& e : entries_) c += e.census;
  return c;
}

LedgerScope::LedgerScope(FlopLedger& ledger) : previous_(t_ledger) { t_ledger = &ledger; }
LedgerScope::~LedgerScope() { t_ledger = previous_; }

ScopeLabel::ScopeLabel(std::string_view name) {
  if (t_ledger != nullptr) {
    t_scope.emplace_back(name);
    pushed_ = true;
  }
}

ScopeLabel::~ScopeLabel() {
  if (pushed_) t_scope.pop_back();
}

namespace ledger {

bool active() noexcept { return t_ledger != nullptr; }

std::string current_scope() {
  std::string s;
  for (const auto& part : t_scope) {
    if (!s.empty()) s += '.';
    s += part;
  }
  return s;
}

void record(KernelKind kind, std::uint64_t flops, const OpCensus& census, bool auxiliary) {
  if (t_ledger == nullptr) return;
  t_ledger->record(LedgerEntry{current_scope(), kind, flops, auxiliary, census});
}

}  // namespace ledger

}  // namespace monet
