#include <atomic>
#include <cstdlib>
#include <string_view>

#include "watch/kernels.hpp"

namespace watch::kernels {
namespace {

const KernelTable* detect() {
  if (const char* env = std::getenv("WATCH_SIMD"); env != nullptr && std::string_view(env) == "scalar") {
    return &scalar::table();
  }
  if (const KernelTable* t = avx2::table()) return t;
  if (const KernelTable* t = neon::table()) return t;
  return &scalar::table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{detect()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

const KernelTable& select(Isa isa) {
  const KernelTable* t = &scalar::table();
  if (isa == Isa::kAvx2 && avx2::table() != nullptr) t = avx2::table();
  if (isa == Isa::kNeon && neon::table() != nullptr) t = neon::table();
  slot().store(t, std::memory_order_relaxed);
  return *t;
}

}  // namespace watch::kernels
