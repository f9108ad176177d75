#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "c2mf/kern/kernels.hpp"
#include "c2mf/rng.hpp"

using namespace c2mf;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

const std::vector<std::size_t> kSizes{0, 1, 2, 3, 4, 5, 7, 8, 15, 16, 33, 100, 1000};

struct ScopedBackend {
  kern::Backend saved;
  explicit ScopedBackend(kern::Backend b) : saved(kern::active_backend()) {
    REQUIRE(kern::set_backend(b));
  }
  ~ScopedBackend() { kern::set_backend(saved); }
};

bool have_avx2() { return kern::backend_available(kern::Backend::avx2); }

template <typename F>
void for_both_backends(F f) {
  {
    ScopedBackend s(kern::Backend::scalar);
    f(kern::Backend::scalar);
  }
  if (have_avx2()) {
    ScopedBackend s(kern::Backend::avx2);
    f(kern::Backend::avx2);
  }
}

}  // namespace

TEST_CASE("scalar backend always available, forced backend sticks") {
  CHECK(kern::backend_available(kern::Backend::scalar));
  ScopedBackend s(kern::Backend::scalar);
  CHECK(kern::active_backend() == kern::Backend::scalar);
  CHECK(kern::backend_name() == "scalar");
}

TEST_CASE("elementwise kernels agree bitwise across backends") {
  if (!have_avx2()) return;
  Rng rng(11);
  for (std::size_t n : kSizes) {
    const auto a = random_vec(rng, n, -50, 50);
    const auto b = random_vec(rng, n, -50, 50);
    std::vector<double> r_s(n), r_a(n);
    void (*const binops[])(const double*, const double*, double*, std::size_t) = {
        kern::vadd, kern::vsub, kern::vmul, kern::vmax};
    for (auto* op : binops) {
      {
        ScopedBackend s(kern::Backend::scalar);
        op(a.data(), b.data(), r_s.data(), n);
      }
      {
        ScopedBackend s(kern::Backend::avx2);
        op(a.data(), b.data(), r_a.data(), n);
      }
      for (std::size_t i = 0; i < n; ++i) CHECK(r_s[i] == r_a[i]);
    }
    const double c = rng.uniform(-3, 3);
    {
      ScopedBackend s(kern::Backend::scalar);
      kern::vadds(a.data(), c, r_s.data(), n);
      kern::vscale(b.data(), c, r_s.data(), 0);  // no-op sanity
    }
    {
      ScopedBackend s(kern::Backend::avx2);
      kern::vadds(a.data(), c, r_a.data(), n);
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(r_s[i] == r_a[i]);
  }
}

TEST_CASE("reductions agree across backends within summation-order tolerance") {
  if (!have_avx2()) return;
  Rng rng(12);
  for (std::size_t n : kSizes) {
    const auto a = random_vec(rng, n, -1, 1);
    const auto b = random_vec(rng, n, -1, 1);
    double dot_s, dot_a, sum_s, sum_a, max_s, max_a;
    {
      ScopedBackend s(kern::Backend::scalar);
      dot_s = kern::dot(a.data(), b.data(), n);
      sum_s = kern::reduce_sum(a.data(), n);
      max_s = kern::reduce_max(a.data(), n);
    }
    {
      ScopedBackend s(kern::Backend::avx2);
      dot_a = kern::dot(a.data(), b.data(), n);
      sum_a = kern::reduce_sum(a.data(), n);
      max_a = kern::reduce_max(a.data(), n);
    }
    CHECK(std::abs(dot_s - dot_a) <= 1e-12 * (1.0 + n));
    CHECK(std::abs(sum_s - sum_a) <= 1e-12 * (1.0 + n));
    CHECK(max_s == max_a);
  }
}

TEST_CASE("axpy matches manual accumulation on both backends") {
  Rng rng(13);
  for_both_backends([&](kern::Backend) {
    const auto x = random_vec(rng, 37, -2, 2);
    auto y = random_vec(rng, 37, -2, 2);
    auto expect = y;
    const double alpha = 1.7;
    for (std::size_t i = 0; i < x.size(); ++i) expect[i] += alpha * x[i];
    kern::axpy(alpha, x.data(), y.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  });
}

TEST_CASE("vexp matches libm to a few ulps over the full range") {
  Rng rng(14);
  std::vector<double> xs;
  for (int i = 0; i < 5000; ++i) xs.push_back(rng.uniform(-745, 710));
  for (int i = 0; i < 2000; ++i) xs.push_back(rng.uniform(-5, 5));
  const double specials[] = {0.0,     -0.0,   1.0,    -1.0,   709.78, -745.0,
                             -746.0,  800.0,  -800.0, kInf,   -kInf,  1e-300,
                             -1e-300, 708.39, -708.39};
  xs.insert(xs.end(), std::begin(specials), std::end(specials));

  for_both_backends([&](kern::Backend) {
    std::vector<double> got(xs.size());
    kern::vexp(xs.data(), got.data(), xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double want = std::exp(xs[i]);
      if (want == 0.0 || std::isinf(want)) {
        CHECK(got[i] == want);
      } else {
        CHECK(std::abs(got[i] - want) <= 4e-15 * std::abs(want));
      }
    }
    const double nan_in = std::numeric_limits<double>::quiet_NaN();
    double nan_out;
    kern::vexp(&nan_in, &nan_out, 1);
    CHECK(std::isnan(nan_out));
  });
}

TEST_CASE("vlog matches libm to a few ulps including edge cases") {
  Rng rng(15);
  std::vector<double> xs;
  for (int i = 0; i < 5000; ++i) xs.push_back(std::exp(rng.uniform(-700, 700)));
  for (int i = 0; i < 2000; ++i) xs.push_back(rng.uniform(1e-12, 2.0));
  const double specials[] = {1.0, 0.5, 2.0, 1e-300, 1e300, 4.9e-324, 2.2e-308,
                             std::numeric_limits<double>::max(), kInf};
  xs.insert(xs.end(), std::begin(specials), std::end(specials));

  for_both_backends([&](kern::Backend) {
    std::vector<double> got(xs.size());
    kern::vlog(xs.data(), got.data(), xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double want = std::log(xs[i]);
      if (std::isinf(want)) {
        CHECK(got[i] == want);
      } else if (want == 0.0) {
        CHECK(std::abs(got[i]) <= 1e-18);
      } else {
        CHECK(std::abs(got[i] - want) <= 4e-15 * std::max(1.0, std::abs(want)));
      }
    }
    double out;
    const double zero = 0.0, neg = -1.0;
    kern::vlog(&zero, &out, 1);
    CHECK(out == -kInf);
    kern::vlog(&neg, &out, 1);
    CHECK(std::isnan(out));
  });
}

TEST_CASE("log_sum_exp: shift property, -inf handling, empty input") {
  Rng rng(16);
  for_both_backends([&](kern::Backend) {
    const auto x = random_vec(rng, 40, -30, 30);
    const double base = kern::log_sum_exp(x.data(), x.size());
    std::vector<double> shifted(x.size());
    kern::vadds(x.data(), 123.5, shifted.data(), x.size());
    CHECK(kern::log_sum_exp(shifted.data(), shifted.size()) ==
          doctest::Approx(base + 123.5).epsilon(1e-13));

    // naive linear-space reference on a small, safe range
    const auto y = random_vec(rng, 9, -3, 3);
    double lin = 0.0;
    for (double v : y) lin += std::exp(v);
    CHECK(kern::log_sum_exp(y.data(), y.size()) ==
          doctest::Approx(std::log(lin)).epsilon(1e-13));

    const std::vector<double> allneg(5, -kInf);
    CHECK(kern::log_sum_exp(allneg.data(), allneg.size()) == -kInf);
    const std::vector<double> mixed{-kInf, 0.0, -kInf};
    CHECK(kern::log_sum_exp(mixed.data(), mixed.size()) ==
          doctest::Approx(0.0).epsilon(1e-15));
    CHECK(kern::log_sum_exp(nullptr, 0) == -kInf);
  });
}
