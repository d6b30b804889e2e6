#include <cstdlib>
#include <cstring>

#include "monet/simd.hpp"

namespace monet::simd {

#if defined(MONET_HAVE_AVX2)
namespace avx2 {
extern const KernelTable kTable;
}
#endif

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("MONET_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
#if defined(MONET_HAVE_AVX2)
  if (cpu_supports_avx2()) return &avx2::kTable;
#endif
  return nullptr;
}

const KernelTable& active() { return *current(); }

bool select(Isa isa) {
  if (isa == Isa::scalar) {
    current() = &scalar_table();
    return true;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr) return false;
  current() = t;
  return true;
}

}  // namespace monet::simd
