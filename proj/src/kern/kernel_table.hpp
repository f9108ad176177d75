#pragma once

#include <cstddef>

// Internal dispatch table shared by the scalar and SIMD backend TUs.
namespace c2mf::kern::detail {

struct KernelTable {
  void (*vadd)(const double*, const double*, double*, std::size_t);
  void (*vsub)(const double*, const double*, double*, std::size_t);
  void (*vmul)(const double*, const double*, double*, std::size_t);
  void (*vmax)(const double*, const double*, double*, std::size_t);
  void (*vadds)(const double*, double, double*, std::size_t);
  void (*vscale)(const double*, double, double*, std::size_t);
  void (*vexp)(const double*, double*, std::size_t);
  void (*vlog)(const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*reduce_sum)(const double*, std::size_t);
  double (*reduce_max)(const double*, std::size_t);
};

// Provided by kernels_avx2.cpp when that TU is in the build; the fallback in
// kernels.cpp returns nullptr.
const KernelTable* avx2_table();
bool avx2_supported();

}  // namespace c2mf::kern::detail
