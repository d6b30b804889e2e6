#pragma once

#include <functional>
#include <string>
#include <vector>

#include "monet/ledger.hpp"
#include "monet/model.hpp"

namespace monet {

/// Arithmetic census of one traced computation.
struct AuditReport {
  OpCensus counts;
  /// Divide, sqrt, compare or other operations found outside layer norms, as "scope: kernel".
  std::vector<std::string> offending;
  /// Divide and sqrt operations attributed to layer norms.
  std::uint64_t layernorm_divide = 0;
  std::uint64_t layernorm_sqrt = 0;
  /// (add + multiply + mac) / total; 1 for an empty trace.
  double multilinear_fraction = 1.0;

  std::uint64_t total() const { return counts.total(); }
  /// True when every non-multilinear operation comes from a layer norm.
  bool clean() const { return offending.empty(); }
  std::string to_json() const;
  std::string to_table() const;
};

/// Runs `body` under a fresh ledger and classifies every recorded kernel.
/// A kernel the ledger cannot name raises AuditError.
AuditReport audit(const std::function<void()>& body);

/// One numeric forward pass of `model` on `input`.
AuditReport audit_ops(const MonetModel& model, const DenseTensor& input);

}  // namespace monet
