#include <doctest.h>

#include <cmath>
#include <vector>

#include "c2mf/c2mf_model.hpp"
#include "c2mf/circuit.hpp"
#include "c2mf/conditional.hpp"
#include "c2mf/fusion.hpp"
#include "c2mf/model.hpp"
#include "c2mf/rng.hpp"
#include "oracles.hpp"

using namespace c2mf;
using namespace c2mf::pc;

namespace {

std::vector<std::vector<double>> random_preds(Rng& rng, int M, int K) {
  std::vector<std::vector<double>> p(M);
  for (auto& v : p) v = oracles::random_simplex(rng, K);
  return p;
}

WeightAssignment random_weights(const Circuit& c, Rng& rng) {
  std::vector<std::vector<double>> logits(c.num_weight_slots);
  for (int s = 0; s < c.num_weight_slots; ++s) {
    logits[s].resize(c.weight_arity[s]);
    for (double& v : logits[s]) v = rng.uniform(-1.5, 1.5);
  }
  return weights_from_logits(logits);
}

int argmax(std::span<const double> v) {
  int b = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[b]) b = i;
  return b;
}

double naive_kl(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pc = std::min(1.0, std::max(1e-12, p[k]));
    const double qc = std::min(1.0, std::max(1e-12, q[k]));
    acc += p[k] * (std::log(pc) - std::log(qc));
  }
  return acc < 0 ? 0 : acc;
}

}  // namespace

TEST_CASE("kl_divergence: identity, closed form, oracle, nonnegativity") {
  SUBCASE("kl(p, p) is exactly zero") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      const auto p = oracles::random_simplex(rng, 5);
      CHECK(fusion::kl_divergence(p, p) == 0.0);
    }
  }
  SUBCASE("point mass vs uniform is log 2") {
    const std::vector<double> p{1.0, 0.0}, q{0.5, 0.5};
    CHECK(fusion::kl_divergence(p, q) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("random pairs match the naive summation oracle") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
      const auto p = oracles::random_simplex(rng, 7);
      const auto q = oracles::random_simplex(rng, 7);
      CHECK(fusion::kl_divergence(p, q) ==
            doctest::Approx(naive_kl(p, q)).epsilon(1e-12));
    }
  }
  SUBCASE("nonnegative on 10k random pairs, positive when clearly different") {
    Rng rng(3);
    for (int t = 0; t < 10000; ++t) {
      const auto p = oracles::random_simplex(rng, 4);
      const auto q = oracles::random_simplex(rng, 4);
      const double kl = fusion::kl_divergence(p, q);
      CHECK(kl >= 0.0);
      double maxdiff = 0.0;
      for (int k = 0; k < 4; ++k) maxdiff = std::max(maxdiff, std::abs(p[k] - q[k]));
      if (maxdiff > 1e-6) CHECK(kl > 0.0);
    }
  }
  SUBCASE("length mismatch throws") {
    CHECK_THROWS(fusion::kl_divergence(std::vector<double>{1.0},
                                       std::vector<double>{0.5, 0.5}));
  }
}

TEST_CASE("relative_from_csic: normalization and the zero-total fallback") {
  const std::vector<double> c{0.2, 0.6};
  const auto r = fusion::relative_from_csic(c);
  CHECK(r[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(0.75).epsilon(1e-12));

  const std::vector<double> zero{0.0, 0.0, 0.0};
  const auto rz = fusion::relative_from_csic(zero);
  for (double v : rz) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> csic(4);
    for (double& v : csic) v = rng.uniform(0, 3);
    const auto rel = fusion::relative_from_csic(csic);
    double total = 0.0;
    for (double v : rel) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("fuse_posterior: uniform target leaves ignore the predictions") {
  Circuit c = build_random_tensorized(2, 4, {4, 4}, 1, 2, 2, 5);
  // categorical leaves keep their uniform initialization
  Rng rng(6);
  WeightAssignment w = random_weights(c, rng);
  for (int t = 0; t < 5; ++t) {
    const auto preds = random_preds(rng, 2, 4);
    const auto post = fusion::fuse_posterior(c, LeafParamsView(c.leaf), w, preds);
    for (double p : post) CHECK(p == doctest::Approx(0.25).epsilon(1e-9));
  }
}

TEST_CASE("csic pieces match brute-force enumeration on a discretized circuit") {
  // Gaussian leaves restricted to a shared grid; the masked posterior and the
  // KL credibility must match exhaustive enumeration + naive KL.
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[i] = -14.0 + 14.0 * i / 19.0;
  const EvalOptions opt{&grid};

  Rng rng(7);
  Circuit c = build_random_tensorized(2, 3, {2, 2}, 1, 2, 2, 8);
  for (double& v : c.leaf.gauss_mean) v = rng.uniform(-10, 0);
  for (double& v : c.leaf.cat_logits) v += rng.uniform(-1, 1);
  REQUIRE(validate(c).ok());
  WeightAssignment w = random_weights(c, rng);

  for (int trial = 0; trial < 5; ++trial) {
    oracles::GridAssignment assign;
    assign.grid_index.assign(2, std::vector<int>(2));
    Evidence ev;
    ev.modality.assign(2, std::vector<double>(2));
    for (int m = 0; m < 2; ++m)
      for (int d = 0; d < 2; ++d) {
        const int gi = rng.index(20);
        assign.grid_index[m][d] = gi;
        ev.modality[m][d] = grid[gi];
      }

    // implementation: posterior with and without masking each modality
    const auto full =
        posterior_over_target(c, LeafParamsView(c.leaf), w, ev, MarginalMask::none(), opt);

    // oracle posterior from per-class enumeration
    auto oracle_posterior = [&](const std::vector<int>& masked) {
      std::vector<double> joint(3);
      double z = 0.0;
      for (int y = 0; y < 3; ++y) {
        auto a = assign;
        a.target = y;
        z += joint[y] = masked.empty()
                            ? oracles::naive_grid_value(c, w, grid, a,
                                                        MarginalMask::none(), c.root)
                            : oracles::enumerate_marginal(c, w, grid, a, masked, false);
      }
      for (double& v : joint) v /= z;
      return joint;
    };

    const auto full_want = oracle_posterior({});
    for (int k = 0; k < 3; ++k) CHECK(std::abs(full[k] - full_want[k]) < 1e-9);

    for (int m = 0; m < 2; ++m) {
      const auto marg = posterior_over_target(c, LeafParamsView(c.leaf), w, ev,
                                              MarginalMask::modality(m), opt);
      const auto marg_want = oracle_posterior({m});
      for (int k = 0; k < 3; ++k) CHECK(std::abs(marg[k] - marg_want[k]) < 1e-9);
      const double csic = fusion::kl_divergence(full, marg);
      CHECK(std::abs(csic - naive_kl(full_want, marg_want)) < 1e-9);
    }
  }
}

TEST_CASE("structural independence gives zero CSIC for every modality") {
  // single product root: masking a modality shifts all class lanes equally,
  // so the posterior is unchanged and the KL is exactly zero
  Circuit c;
  c.num_modalities = 2;
  c.num_classes = 3;
  c.leaf_dims = {1, 1};
  c.leaf.gauss_mean = {0.2, -0.4};
  c.leaf.gauss_log_std = {0.0, 0.1};
  c.leaf.cat_logits = {0.3, -0.2, 0.8};
  CircuitNode g1;
  g1.kind = NodeKind::gaussian_leaf;
  g1.var = VariableId::modality_dim(0, 0);
  g1.param_index = 0;
  CircuitNode g2;
  g2.kind = NodeKind::gaussian_leaf;
  g2.var = VariableId::modality_dim(1, 0);
  g2.param_index = 1;
  CircuitNode cat;
  cat.kind = NodeKind::categorical_leaf;
  cat.var = VariableId::target();
  cat.param_index = 0;
  CircuitNode prod;
  prod.kind = NodeKind::product;
  prod.children = {0, 1, 2};
  c.nodes = {g1, g2, cat, prod};
  c.root = 3;
  REQUIRE(validate(c).ok());

  WeightAssignment w;  // no sum nodes
  const std::vector<std::vector<double>> preds{{1.0}, {1.0}};
  const auto rep = fusion::compute_csic(c, LeafParamsView(c.leaf), w, preds);
  CHECK(rep.csic[0] == 0.0);
  CHECK(rep.csic[1] == 0.0);
  // zero-total fallback: uniform relative credibility
  for (double r : rep.relative_csic) CHECK(r == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("compute_csic wiring matches its definition") {
  Rng rng(9);
  Circuit c = build_random_tensorized(2, 3, {3, 3}, 1, 2, 2, 10);
  for (double& v : c.leaf.gauss_mean) v = rng.uniform(-8, 0);
  for (double& v : c.leaf.cat_logits) v += rng.uniform(-1, 1);
  REQUIRE(validate(c).ok());
  WeightAssignment w = random_weights(c, rng);

  for (int t = 0; t < 10; ++t) {
    const auto preds = random_preds(rng, 2, 3);
    const auto rep = fusion::compute_csic(c, LeafParamsView(c.leaf), w, preds);

    Evidence ev;
    ev.modality.resize(2);
    for (int m = 0; m < 2; ++m) ev.modality[m] = nn::to_leaf_inputs(preds[m]);
    const auto full = posterior_over_target(c, LeafParamsView(c.leaf), w, ev,
                                            MarginalMask::none());
    for (int k = 0; k < 3; ++k) CHECK(rep.full_posterior[k] == full[k]);
    for (int m = 0; m < 2; ++m) {
      const auto marg = posterior_over_target(c, LeafParamsView(c.leaf), w, ev,
                                              MarginalMask::modality(m));
      CHECK(rep.csic[m] == doctest::Approx(naive_kl(full, marg)).epsilon(1e-12));
      CHECK(rep.csic[m] >= 0.0);
    }
    CHECK(std::abs(rep.relative_csic[0] + rep.relative_csic[1] - 1.0) <= 1e-9);
  }
}

TEST_CASE("fuse_weighted_mean: degenerate weights, averaging, oracle, convexity") {
  fusion::CredibilityReport rep;
  rep.relative_csic = {1.0, 0.0};
  const std::vector<std::vector<double>> preds{{0.2, 0.8}, {0.9, 0.1}};
  const auto out = fusion::fuse_weighted_mean(rep, preds);
  CHECK(out[0] == 0.2);
  CHECK(out[1] == 0.8);

  rep.relative_csic = {0.5, 0.5};
  const std::vector<std::vector<double>> onehots{{1.0, 0.0}, {0.0, 1.0}};
  const auto mix = fusion::fuse_weighted_mean(rep, onehots);
  CHECK(mix[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mix[1] == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    fusion::CredibilityReport r;
    std::vector<double> csic(3);
    for (double& v : csic) v = rng.uniform(0, 2);
    r.relative_csic = fusion::relative_from_csic(csic);
    const auto ps = random_preds(rng, 3, 5);
    const auto got = fusion::fuse_weighted_mean(r, ps);
    double total = 0.0;
    for (int k = 0; k < 5; ++k) {
      double want = 0.0;
      for (int m = 0; m < 3; ++m) want += r.relative_csic[m] * ps[m][k];
      CHECK(got[k] == doctest::Approx(want).epsilon(1e-12));
      CHECK(got[k] >= 0.0);
      total += got[k];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("static reduction: zeroed-input hypernetwork equals DPC exactly") {
  ModelConfig cfg;
  cfg.num_modalities = 2;
  cfg.num_classes = 3;
  cfg.feature_dims = {4, 4};
  cfg.circuit = {1, 2, 2};
  cfg.method = fusion::Method::c2dpc;
  cfg.seed = 21;
  C2mfModel ctx(cfg);

  // zero the trunk's input weights: g_phi(z) becomes bitwise constant in z
  ad::Parameter* w0 = ctx.params().find("hypernet.w0");
  REQUIRE(w0 != nullptr);
  std::fill(w0->value.begin(), w0->value.end(), 0.0);

  Rng rng(22);
  std::vector<std::vector<double>> hs1(2, std::vector<double>(cfg.d_h)), hs2 = hs1;
  for (auto& h : hs1)
    for (double& v : h) v = rng.uniform(-1, 1);
  for (auto& h : hs2)
    for (double& v : h) v = rng.uniform(-1, 1);
  const auto wa1 = ctx.weights_for(hs1);
  const auto wa2 = ctx.weights_for(hs2);
  REQUIRE(wa1.log_rows.size() == wa2.log_rows.size());
  for (std::size_t s = 0; s < wa1.log_rows.size(); ++s)
    for (std::size_t j = 0; j < wa1.log_rows[s].size(); ++j)
      CHECK(wa1.log_rows[s][j] == wa2.log_rows[s][j]);  // bitwise constant

  // a DPC over the same circuit with logits equal to the constant rows
  ModelConfig dcfg = cfg;
  dcfg.method = fusion::Method::dpc;
  C2mfModel dpc(dcfg);  // same seed -> same circuit structure and leaf init
  ad::Parameter* logits = dpc.params().find("fusion.sum_logits");
  REQUIRE(logits != nullptr);
  {
    std::size_t off = 0;
    for (const auto& row : wa1.log_rows)
      for (double v : row) logits->value[off++] = v;
    REQUIRE(off == logits->size());
  }
  const auto wa_static = cond::static_weights(dpc.layout(), logits->value);

  for (int t = 0; t < 20; ++t) {
    const auto preds = random_preds(rng, 2, 3);
    const auto rep1 = fusion::compute_csic(ctx.circuit(), ctx.leaf_view(), wa1, preds);
    const auto rep2 =
        fusion::compute_csic(dpc.circuit(), dpc.leaf_view(), wa_static, preds);
    for (int m = 0; m < 2; ++m) {
      CHECK(std::abs(rep1.csic[m] - rep2.csic[m]) <= 1e-12);
      CHECK(std::abs(rep1.relative_csic[m] - rep2.relative_csic[m]) <= 1e-12);
    }
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(rep1.full_posterior[k] - rep2.full_posterior[k]) <= 1e-12);
  }
}

TEST_CASE("posterior argmax is invariant to shifting all target-leaf logits") {
  Rng rng(23);
  Circuit c = build_random_tensorized(2, 4, {4, 4}, 1, 2, 1, 24);
  for (double& v : c.leaf.cat_logits) v += rng.uniform(-1, 1);
  REQUIRE(validate(c).ok());
  WeightAssignment w = random_weights(c, rng);
  const auto preds = random_preds(rng, 2, 4);
  const auto base = fusion::fuse_posterior(c, LeafParamsView(c.leaf), w, preds);

  Circuit shifted = c;
  for (double& v : shifted.leaf.cat_logits) v += 3.75;
  REQUIRE(validate(shifted).ok());
  const auto moved =
      fusion::fuse_posterior(shifted, LeafParamsView(shifted.leaf), w, preds);
  for (int k = 0; k < 4; ++k)
    CHECK(base[k] == doctest::Approx(moved[k]).epsilon(1e-12));
  CHECK(argmax(base) == argmax(moved));
}
