#pragma once

// Data-parallel inner loops shared by the scorers and the training core.
//
// Every kernel has a scalar reference implementation and, where the CPU
// supports it, a vectorized variant. The active table is chosen once at
// first use from the running CPU's capabilities; WATCH_SIMD=scalar in the
// environment forces the reference path. Vectorized variants reassociate
// sums, so they agree with the reference to rounding, not bit-for-bit.

#include <cstddef>
#include <span>
#include <string_view>

namespace watch::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
// Null when the build or the CPU lacks AVX2+FMA.
const KernelTable* table();
}
namespace neon {
const KernelTable* table();
}

const KernelTable& active();
// Overrides the dispatch choice; falls back to scalar when `isa` is unavailable.
// Returns the table actually selected.
const KernelTable& select(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace watch::kernels
