// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <cstring>

#include "gift/kernels.hpp"

namespace gift::kern {

#if GIFT_HAVE_AVX2_LANE
const Kernels* avx2_lane_table();  // defined in the AVX2 translation unit

static bool cpu_has_avx2() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const Kernels* avx2_kernels() {
  return cpu_has_avx2() ? avx2_lane_table() : nullptr;
}
#else
const Kernels* avx2_kernels() { return nullptr; }
#endif

const Kernels& active_kernels() {
  static const Kernels* picked = [] {
    const char* forced = std::getenv("GIFT_KERNELS");
    if (forced != nullptr && std::strcmp(forced, "scalar") == 0) {
      return &scalar_kernels();
    }
    const Kernels* simd = avx2_kernels();
    if (forced != nullptr && std::strcmp(forced, "avx2") == 0) {
      return simd != nullptr ? simd : &scalar_kernels();
    }
    return simd != nullptr ? simd : &scalar_kernels();
  }();
  return *picked;
}

}  // namespace gift::kern
