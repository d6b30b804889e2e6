#include "monet/audit.hpp"

#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "monet/error.hpp"

namespace monet {

AuditReport audit(const std::function<void()>& body) {
  FlopLedger ledger;
  {
    LedgerScope scope(ledger);
    body();
  }
  AuditReport r;
  for (const LedgerEntry& e : ledger.entries()) {
    if (e.kind == KernelKind::unknown) throw AuditError("unclassifiable kernel at \"" + e.scope + "\"");
    r.counts += e.census;
    if (e.kind == KernelKind::layernorm) {
      r.layernorm_divide += e.census[OpClass::divide];
      r.layernorm_sqrt += e.census[OpClass::sqrt];
      if (e.census[OpClass::compare] + e.census[OpClass::other] == 0) continue;
    }
    const std::uint64_t suspicious = e.census[OpClass::divide] + e.census[OpClass::sqrt] +
                                     e.census[OpClass::compare] + e.census[OpClass::other];
    if (suspicious > 0) r.offending.push_back(e.scope + ": " + std::string(kernel_kind_name(e.kind)));
  }
  const std::uint64_t total = r.counts.total();
  if (total > 0) {
    const std::uint64_t ml = r.counts[OpClass::add] + r.counts[OpClass::multiply] + r.counts[OpClass::mac];
    r.multilinear_fraction = static_cast<double>(ml) / static_cast<double>(total);
  }
  return r;
}

AuditReport audit_ops(const MonetModel& model, const DenseTensor& input) {
  return audit([&] { (void)forward(model, input); });
}

std::string AuditReport::to_json() const {
  nlohmann::json j;
  nlohmann::json c;
  for (std::size_t i = 0; i < kOpClassCount; ++i) {
    c[std::string(op_class_name(static_cast<OpClass>(i)))] = counts.counts[i];
  }
  j["counts"] = c;
  j["total"] = total();
  j["offending"] = offending;
  j["layernorm_divide"] = layernorm_divide;
  j["layernorm_sqrt"] = layernorm_sqrt;
  j["multilinear_fraction"] = multilinear_fraction;
  j["clean"] = clean();
  return j.dump(2);
}

std::string AuditReport::to_table() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < kOpClassCount; ++i) {
    os << std::left << std::setw(10) << op_class_name(static_cast<OpClass>(i)) << std::right << std::setw(16)
       << counts.counts[i] << '\n';
  }
  os << std::left << std::setw(10) << "total" << std::right << std::setw(16) << total() << '\n';
  os << "multilinear fraction " << multilinear_fraction << '\n';
  for (const auto& o : offending) os << "offending: " << o << '\n';
  return os.str();
}

}  // namespace monet
