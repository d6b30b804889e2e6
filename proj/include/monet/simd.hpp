#pragma once

#include <cstddef>
#include <string_view>

namespace monet::simd {

enum class Isa { scalar, avx2 };

/// Contiguous f64 primitives behind every dense kernel. Each variant fixes its own
/// reduction order, so results are reproducible run to run for a given ISA.
struct KernelTable {
  Isa isa;
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// out[j] = dot(a, b_j) for four rows; bitwise equal to four calls of `dot`.
  void (*dot4)(const double* a, const double* b0, const double* b1, const double* b2, const double* b3,
               std::size_t n, double* out);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the build lacks AVX2 support or the CPU does not report AVX2+FMA.
const KernelTable* avx2_table();

bool cpu_supports_avx2();

/// Table used by the tensor kernels. Chosen once at startup (best available, or
/// the MONET_SIMD environment variable: "scalar" / "avx2").
const KernelTable& active();
/// Overrides the active table; returns false if the ISA is unavailable.
bool select(Isa isa);

}  // namespace monet::simd
