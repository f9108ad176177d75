// AVX2+FMA kernel backend. Compiled with -mavx2 -mfma in its own translation
// unit; only reachable after the runtime cpuid check in kernels.cpp.
//
// vexp/vlog follow the classic Cephes double-precision range reduction +
// rational approximation (~1-2 ulp), with explicit handling of +-inf, NaN,
// zero, and subnormal inputs so that circuit evaluation can pass -inf
// log-probabilities through safely.

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <limits>

#include "kernel_table.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace c2mf::kern {

using detail::KernelTable;

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

void a_vadd(const double* a, const double* b, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] + b[i];
}
void a_vsub(const double* a, const double* b, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] - b[i];
}
void a_vmul(const double* a, const double* b, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] * b[i];
}
void a_vmax(const double* a, const double* b, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i), vb = _mm256_loadu_pd(b + i);
    // match scalar semantics a>b?a:b (propagates b for NaN in a)
    __m256d m = _mm256_blendv_pd(vb, va, _mm256_cmp_pd(va, vb, _CMP_GT_OQ));
    _mm256_storeu_pd(o + i, m);
  }
  for (; i < n; ++i) o[i] = a[i] > b[i] ? a[i] : b[i];
}
void a_vadds(const double* a, double s, double* o, std::size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) o[i] = a[i] + s;
}
void a_vscale(const double* a, double s, double* o, std::size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) o[i] = a[i] * s;
}

double a_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}
void a_axpy(double a, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}
double a_reduce_sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}
double a_reduce_max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double tmp[4];
    _mm256_store_pd(tmp, acc);
    m = tmp[0];
    for (int k = 1; k < 4; ++k)
      if (tmp[k] > m) m = tmp[k];
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

// ---- exp --------------------------------------------------------------------

constexpr double kExpHi = 709.782712893383996843;   // overflow threshold
constexpr double kExpLo = -745.133219101941108420;  // underflow threshold
constexpr double kLog2E = 1.4426950408889634073599;
constexpr double kLn2Hi = 6.93145751953125e-1;
constexpr double kLn2Lo = 1.42860682030941723212e-6;

constexpr double kExpP0 = 1.26177193074810590878e-4;
constexpr double kExpP1 = 3.02994407707441961300e-2;
constexpr double kExpP2 = 9.99999999999999999910e-1;
constexpr double kExpQ0 = 3.00198505138664455042e-6;
constexpr double kExpQ1 = 2.52448340349684104192e-3;
constexpr double kExpQ2 = 2.27265548208155028766e-1;
constexpr double kExpQ3 = 2.00000000000000000005e0;

// 2^k per lane from small int64 k (|k| <= 600 here).
inline __m256d pow2_i64(__m256i k) {
  __m256i biased = _mm256_add_epi64(k, _mm256_set1_epi64x(1023));
  return _mm256_castsi256_pd(_mm256_slli_epi64(biased, 52));
}

inline __m256d exp4(__m256d x) {
  const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d big_mask = _mm256_cmp_pd(x, _mm256_set1_pd(kExpHi), _CMP_GT_OQ);
  __m256d small_mask = _mm256_cmp_pd(x, _mm256_set1_pd(kExpLo), _CMP_LT_OQ);
  __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);

  __m256d xc = _mm256_max_pd(_mm256_min_pd(x, _mm256_set1_pd(kExpHi)),
                             _mm256_set1_pd(kExpLo));

  __m256d k = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(kLog2E)),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(kLn2Hi), xc);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(kLn2Lo), r);

  __m256d z = _mm256_mul_pd(r, r);
  __m256d p = _mm256_set1_pd(kExpP0);
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(kExpP1));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(kExpP2));
  p = _mm256_mul_pd(p, r);  // r*P(r^2)
  __m256d q = _mm256_set1_pd(kExpQ0);
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(kExpQ1));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(kExpQ2));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(kExpQ3));
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // scale by 2^k in two halves so k down to -1075 stays representable
  __m128i ki32 = _mm256_cvtpd_epi32(k);
  __m256i ki = _mm256_cvtepi32_epi64(ki32);
  __m256i k1 = _mm256_cvtepi32_epi64(_mm_srai_epi32(ki32, 1));
  __m256i k2 = _mm256_sub_epi64(ki, k1);
  e = _mm256_mul_pd(e, pow2_i64(k1));
  e = _mm256_mul_pd(e, pow2_i64(k2));

  e = _mm256_blendv_pd(e, inf, big_mask);
  e = _mm256_blendv_pd(e, _mm256_setzero_pd(), small_mask);
  e = _mm256_blendv_pd(e, _mm256_set1_pd(std::numeric_limits<double>::quiet_NaN()),
                       nan_mask);
  return e;
}

void a_vexp(const double* x, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(o + i, exp4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double buf[4] = {0, 0, 0, 0};
    for (std::size_t k = i; k < n; ++k) buf[k - i] = x[k];
    alignas(32) double out[4];
    _mm256_store_pd(out, exp4(_mm256_load_pd(buf)));
    for (std::size_t k = i; k < n; ++k) o[k] = out[k - i];
  }
}

// ---- log --------------------------------------------------------------------

constexpr double kLogP0 = 1.01875663804580931796e-4;
constexpr double kLogP1 = 4.97494994976747001425e-1;
constexpr double kLogP2 = 4.70579119878881725854e0;
constexpr double kLogP3 = 1.44989225341610930846e1;
constexpr double kLogP4 = 1.79368678507819816313e1;
constexpr double kLogP5 = 7.70838733755885391666e0;
constexpr double kLogQ0 = 1.12873587189167450590e1;
constexpr double kLogQ1 = 4.52279145837532221105e1;
constexpr double kLogQ2 = 8.29875266912776603211e1;
constexpr double kLogQ3 = 7.11544750618563894466e1;
constexpr double kLogQ4 = 2.31251620126765340583e1;
constexpr double kLogLn2Hi = 0.693359375;
constexpr double kLogLn2Lo = -2.121944400546905827679e-4;
constexpr double kSqrtHalf = 0.70710678118654752440;

// int64 lanes (small magnitude) -> double lanes
inline __m256d i64_to_pd(__m256i v) {
  const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);  // 2^52
  __m256i shifted = _mm256_add_epi64(v, magic);
  return _mm256_sub_pd(_mm256_castsi256_pd(shifted), _mm256_set1_pd(4503599627370496.0));
}

inline __m256d log4(__m256d x) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  const __m256d nan = _mm256_set1_pd(std::numeric_limits<double>::quiet_NaN());

  __m256d zero_mask = _mm256_cmp_pd(x, zero, _CMP_EQ_OQ);
  __m256d neg_mask = _mm256_cmp_pd(x, zero, _CMP_LT_OQ);
  __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  __m256d inf_mask = _mm256_cmp_pd(x, inf, _CMP_EQ_OQ);

  // prescale subnormals by 2^54
  __m256d tiny_mask = _mm256_andnot_pd(
      zero_mask, _mm256_cmp_pd(x, _mm256_set1_pd(2.2250738585072014e-308), _CMP_LT_OQ));
  __m256d xs = _mm256_blendv_pd(x, _mm256_mul_pd(x, _mm256_set1_pd(18014398509481984.0)), tiny_mask);
  __m256d e_bias = _mm256_blendv_pd(zero, _mm256_set1_pd(-54.0), tiny_mask);

  // m in [0.5, 1), e such that xs = m * 2^e
  __m256i bits = _mm256_castpd_si256(xs);
  __m256i raw_e = _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7FF));
  __m256d e = _mm256_add_pd(_mm256_sub_pd(i64_to_pd(raw_e), _mm256_set1_pd(1022.0)), e_bias);
  __m256i mant = _mm256_or_si256(
      _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
      _mm256_set1_epi64x(0x3FE0000000000000LL));
  __m256d m = _mm256_castsi256_pd(mant);

  __m256d lt = _mm256_cmp_pd(m, _mm256_set1_pd(kSqrtHalf), _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(lt, _mm256_set1_pd(1.0)));
  m = _mm256_blendv_pd(m, _mm256_add_pd(m, m), lt);
  __m256d z = _mm256_sub_pd(m, _mm256_set1_pd(1.0));

  __m256d p = _mm256_set1_pd(kLogP0);
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(kLogP1));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(kLogP2));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(kLogP3));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(kLogP4));
  p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(kLogP5));
  __m256d q = _mm256_add_pd(z, _mm256_set1_pd(kLogQ0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(kLogQ1));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(kLogQ2));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(kLogQ3));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(kLogQ4));

  __m256d z2 = _mm256_mul_pd(z, z);
  __m256d y = _mm256_div_pd(_mm256_mul_pd(_mm256_mul_pd(z, z2), p), q);
  y = _mm256_fmadd_pd(e, _mm256_set1_pd(kLogLn2Lo), y);
  y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z2, y);
  __m256d r = _mm256_add_pd(z, y);
  r = _mm256_fmadd_pd(e, _mm256_set1_pd(kLogLn2Hi), r);

  r = _mm256_blendv_pd(r, _mm256_sub_pd(zero, inf), zero_mask);
  r = _mm256_blendv_pd(r, inf, inf_mask);
  r = _mm256_blendv_pd(r, nan, _mm256_or_pd(neg_mask, nan_mask));
  return r;
}

void a_vlog(const double* x, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(o + i, log4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double buf[4] = {1, 1, 1, 1};
    for (std::size_t k = i; k < n; ++k) buf[k - i] = x[k];
    alignas(32) double out[4];
    _mm256_store_pd(out, log4(_mm256_load_pd(buf)));
    for (std::size_t k = i; k < n; ++k) o[k] = out[k - i];
  }
}

constexpr KernelTable kAvx2Table{
    a_vadd, a_vsub, a_vmul,  a_vmax, a_vadds,       a_vscale,
    a_vexp, a_vlog, a_dot,   a_axpy, a_reduce_sum,  a_reduce_max,
};

}  // namespace

namespace detail {
const KernelTable* avx2_table() { return &kAvx2Table; }
bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
}  // namespace detail

}  // namespace c2mf::kern

#else  // non-x86 build with the AVX2 TU enabled by mistake

namespace c2mf::kern::detail {
const KernelTable* avx2_table() { return nullptr; }
bool avx2_supported() { return false; }
}  // namespace c2mf::kern::detail

#endif
