#pragma once

#include <cstddef>
#include <string_view>

// Low-level double-precision kernels behind the numeric hot paths (MLP
// mat-vec products, log-sum-exp over circuit children, elementwise exp/log).
// A scalar reference implementation always exists; on x86-64 an AVX2+FMA
// variant is selected at runtime when the CPU supports it. The two backends
// agree to a few ulps (exactly for the purely elementwise ops); the suite in
// tests/test_kernels.cpp pins that equivalence.

namespace c2mf::kern {

enum class Backend { scalar, avx2 };

// Backend active for subsequent kernel calls. Selection happens once on
// first use: AVX2 if the CPU has avx2+fma and the binary was built with the
// AVX2 translation unit, else scalar. The environment variable
// C2MF_KERNEL_BACKEND=scalar|avx2 overrides the automatic choice.
Backend active_backend();
std::string_view backend_name();

// Force a backend (used by the equivalence tests). Returns false and leaves
// the state unchanged if the requested backend is unavailable.
bool set_backend(Backend b);
bool backend_available(Backend b);

// ---- elementwise -----------------------------------------------------------
void vadd(const double* a, const double* b, double* out, std::size_t n);   // a+b
void vsub(const double* a, const double* b, double* out, std::size_t n);   // a-b
void vmul(const double* a, const double* b, double* out, std::size_t n);   // a*b
void vmax(const double* a, const double* b, double* out, std::size_t n);   // max(a,b)
void vadds(const double* a, double s, double* out, std::size_t n);         // a+s
void vscale(const double* a, double s, double* out, std::size_t n);        // a*s
void vexp(const double* x, double* out, std::size_t n);
void vlog(const double* x, double* out, std::size_t n);

// ---- reductions / BLAS-1 ---------------------------------------------------
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);            // y += a*x
double reduce_sum(const double* x, std::size_t n);
double reduce_max(const double* x, std::size_t n);   // -inf when n == 0

// log(sum_i exp(x_i)), max-shifted; -inf for n == 0 or all-(-inf) input.
double log_sum_exp(const double* x, std::size_t n);

}  // namespace c2mf::kern
