#include "monet/simd.hpp"

namespace monet::simd {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void dot4(const double* a, const double* b0, const double* b1, const double* b2, const double* b3, std::size_t n,
          double* out) {
  out[0] = dot(a, b0, n);
  out[1] = dot(a, b1, n);
  out[2] = dot(a, b2, n);
  out[3] = dot(a, b3, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void scale(double alpha, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

const KernelTable kScalar{Isa::scalar, "scalar", dot, dot4, axpy, mul, add, scale};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace monet::simd
