#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace monet {

/// Arithmetic classes tracked by the op census.
enum class OpClass : std::uint8_t { add, multiply, mac, divide, sqrt, compare, other };
inline constexpr std::size_t kOpClassCount = 7;
std::string_view op_class_name(OpClass c);

struct OpCensus {
  std::array<std::uint64_t, kOpClassCount> counts{};

  std::uint64_t& operator[](OpClass c) { return counts[static_cast<std::size_t>(c)]; }
  std::uint64_t operator[](OpClass c) const { return counts[static_cast<std::size_t>(c)]; }
  std::uint64_t total() const;
  OpCensus& operator+=(const OpCensus& o);
};

enum class KernelKind : std::uint8_t {
  matmul,
  linear,
  bias_add,
  hadamard,
  add,
  scale,
  layernorm,
  conv2d,
  spatial_shift,
  avgpool,
  cross_entropy,
  reduce,
  unknown,
};
std::string_view kernel_kind_name(KernelKind k);

/// One kernel invocation as seen by the ledger.
struct LedgerEntry {
  std::string scope;
  KernelKind kind;
  std::uint64_t flops = 0;  // one unit per multiply-accumulate
  bool auxiliary = false;   // normalization/pooling, outside the MAC total
  OpCensus census;
};

/// Records FLOPs and the arithmetic census of every kernel run while it is active on this thread.
class FlopLedger {
 public:
  void record(LedgerEntry entry);
  void clear() { entries_.clear(); }

  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
  std::uint64_t mac_flops() const;
  std::uint64_t auxiliary_flops() const;
  /// MAC FLOPs keyed by the first component of the scope path.
  std::map<std::string, std::uint64_t> mac_flops_by_module() const;
  std::map<std::string, std::uint64_t> auxiliary_flops_by_module() const;
  OpCensus census() const;

 private:
  std::vector<LedgerEntry> entries_;
};

/// Installs a ledger for the current thread for the lifetime of the guard.
class LedgerScope {
 public:
  explicit LedgerScope(FlopLedger& ledger);
  ~LedgerScope();
  LedgerScope(const LedgerScope&) = delete;
  LedgerScope& operator=(const LedgerScope&) = delete;

 private:
  FlopLedger* previous_;
};

/// Pushes a component onto the scope path while a ledger is active.
class ScopeLabel {
 public:
  explicit ScopeLabel(std::string_view name);
  ~ScopeLabel();
  ScopeLabel(const ScopeLabel&) = delete;
  ScopeLabel& operator=(const ScopeLabel&) = delete;

 private:
  bool pushed_ = false;
};

namespace ledger {

bool active() noexcept;
void record(KernelKind kind, std::uint64_t flops, const OpCensus& census, bool auxiliary = false);
std::string current_scope();

}  // namespace ledger

}  // namespace monet
