#include "c2mf/kern/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>

#include "kernel_table.hpp"

namespace c2mf::kern {

using detail::KernelTable;

namespace {

// ---- scalar reference backend ----------------------------------------------

void s_vadd(const double* a, const double* b, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}
void s_vsub(const double* a, const double* b, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}
void s_vmul(const double* a, const double* b, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}
void s_vmax(const double* a, const double* b, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] > b[i] ? a[i] : b[i];
}
void s_vadds(const double* a, double s, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + s;
}
void s_vscale(const double* a, double s, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * s;
}
void s_vexp(const double* x, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = std::exp(x[i]);
}
void s_vlog(const double* x, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = std::log(x[i]);
}
double s_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
void s_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
double s_reduce_sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}
double s_reduce_max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

constexpr KernelTable kScalarTable{
    s_vadd, s_vsub, s_vmul, s_vmax, s_vadds,      s_vscale,
    s_vexp, s_vlog, s_dot,  s_axpy, s_reduce_sum, s_reduce_max,
};

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const KernelTable* pick_initial() {
  const KernelTable* avx2 = detail::avx2_supported() ? detail::avx2_table() : nullptr;
  Backend want = avx2 ? Backend::avx2 : Backend::scalar;
  if (const char* env = std::getenv("C2MF_KERNEL_BACKEND")) {
    if (std::strcmp(env, "scalar") == 0) want = Backend::scalar;
    else if (std::strcmp(env, "avx2") == 0 && avx2) want = Backend::avx2;
  }
  g_backend.store(want);
  return want == Backend::avx2 ? avx2 : &kScalarTable;
}

const KernelTable* table() {
  const KernelTable* t = g_table.load(std::memory_order_acquire);
  if (t) return t;
  t = pick_initial();
  g_table.store(t, std::memory_order_release);
  return t;
}

}  // namespace

#if !defined(C2MF_WITH_AVX2)
namespace detail {
const KernelTable* avx2_table() { return nullptr; }
bool avx2_supported() { return false; }
}  // namespace detail
#endif

Backend active_backend() {
  table();
  return g_backend.load();
}

std::string_view backend_name() {
  return active_backend() == Backend::avx2 ? "avx2" : "scalar";
}

bool backend_available(Backend b) {
  if (b == Backend::scalar) return true;
  return detail::avx2_supported() && detail::avx2_table() != nullptr;
}

bool set_backend(Backend b) {
  if (!backend_available(b)) return false;
  g_table.store(b == Backend::avx2 ? detail::avx2_table() : &kScalarTable,
                std::memory_order_release);
  g_backend.store(b);
  return true;
}

void vadd(const double* a, const double* b, double* o, std::size_t n) { table()->vadd(a, b, o, n); }
void vsub(const double* a, const double* b, double* o, std::size_t n) { table()->vsub(a, b, o, n); }
void vmul(const double* a, const double* b, double* o, std::size_t n) { table()->vmul(a, b, o, n); }
void vmax(const double* a, const double* b, double* o, std::size_t n) { table()->vmax(a, b, o, n); }
void vadds(const double* a, double s, double* o, std::size_t n) { table()->vadds(a, s, o, n); }
void vscale(const double* a, double s, double* o, std::size_t n) { table()->vscale(a, s, o, n); }
void vexp(const double* x, double* o, std::size_t n) { table()->vexp(x, o, n); }
void vlog(const double* x, double* o, std::size_t n) { table()->vlog(x, o, n); }
double dot(const double* a, const double* b, std::size_t n) { return table()->dot(a, b, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { table()->axpy(a, x, y, n); }
double reduce_sum(const double* x, std::size_t n) { return table()->reduce_sum(x, n); }
double reduce_max(const double* x, std::size_t n) { return table()->reduce_max(x, n); }

double log_sum_exp(const double* x, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  const double m = reduce_max(x, n);
  if (!std::isfinite(m)) return m;  // all -inf, or a +inf/NaN dominates
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(x[i] - m);
  return m + std::log(acc);
}

}  // namespace c2mf::kern
