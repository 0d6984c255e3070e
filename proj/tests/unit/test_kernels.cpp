#include <cmath>
#include <vector>

#include "doctest.h"
#include "watch/kernels.hpp"
#include "watch/random.hpp"

using namespace watch;
using kernels::Isa;

namespace {

std::vector<const kernels::KernelTable*> variants() {
  std::vector<const kernels::KernelTable*> out;
  if (const auto* t = kernels::avx2::table()) out.push_back(t);
  if (const auto* t = kernels::neon::table()) out.push_back(t);
  return out;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * 3.0;
  return v;
}

}  // namespace

TEST_CASE("scalar kernels match direct loops") {
  const auto& ref = kernels::scalar::table();
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  CHECK(ref.dot(a.data(), b.data(), 3) == 12.0);
  CHECK(ref.squared_distance(a.data(), b.data(), 3) == 9.0 + 49.0 + 9.0);
  std::vector<double> y{1, 1, 1};
  ref.axpy(2.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3, 5, 7});
  CHECK(ref.dot(a.data(), b.data(), 0) == 0.0);
}

TEST_CASE("vectorized kernels agree with the scalar reference") {
  Rng rng(11);
  const auto& ref = kernels::scalar::table();
  for (const auto* simd : variants()) {
    CAPTURE(simd->name);
    for (std::size_t n = 0; n <= 67; ++n) {
      const auto a = random_vec(n, rng);
      const auto b = random_vec(n, rng);
      double scale = 0.0;
      for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]) + (a[i] - b[i]) * (a[i] - b[i]);
      const double tol = 1e-13 * (scale + 1.0);
      CHECK(std::abs(simd->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tol);
      CHECK(std::abs(simd->squared_distance(a.data(), b.data(), n) - ref.squared_distance(a.data(), b.data(), n)) <=
            tol);
      auto y1 = random_vec(n, rng);
      auto y2 = y1;
      simd->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-14 * (std::abs(y2[i]) + 1.0));
    }
  }
}

TEST_CASE("select falls back to scalar for unavailable instruction sets") {
  const auto& before = kernels::active();
  const Isa missing = kernels::avx2::table() == nullptr ? kernels::Isa::kAvx2 : kernels::Isa::kNeon;
  if (missing == kernels::Isa::kNeon && kernels::neon::table() != nullptr) return;
  CHECK(kernels::select(missing).isa == kernels::Isa::kScalar);
  CHECK(kernels::select(kernels::Isa::kScalar).isa == kernels::Isa::kScalar);
  kernels::select(before.isa);
  CHECK(kernels::active().isa == before.isa);
}
