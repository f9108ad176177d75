#include <doctest.h>

#include <cmath>
#include <vector>

#include "c2mf/benchmark.hpp"
#include "c2mf/errors.hpp"
#include "c2mf/training.hpp"
#include "oracles.hpp"

using namespace c2mf;
using ad::Tape;
using Slot = ad::Tape::Slot;

namespace {

// tiny, well-separated 2-class synthetic problem
bench::SyntheticData tiny_data(int n_train = 120, int n_val = 40, int K = 2,
                               std::uint64_t seed = 3) {
  auto spec = bench::make_separated_spec(2, K, {3, 3}, 3.0, 0.3, n_train, n_val,
                                         n_val, seed);
  return bench::generate_synthetic(spec);
}

ModelConfig tiny_model_config(fusion::Method method, int K = 2,
                              std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.num_modalities = 2;
  cfg.num_classes = K;
  cfg.feature_dims = {3, 3};
  cfg.encoder_hidden = 8;
  cfg.d_h = 8;
  cfg.aggregator_hidden = 8;
  cfg.d_z = 4;
  cfg.hypernet_hidden = 8;
  cfg.circuit = {1, 2, 1};
  cfg.method = method;
  cfg.seed = seed;
  return cfg;
}

std::vector<std::vector<double>> param_values(const C2mfModel& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < m.params().count(); ++i)
    out.push_back(m.params().at(i).value);
  return out;
}

}  // namespace

TEST_CASE("loss_total: mu = 0 reduces to the fusion loss alone") {
  auto data = tiny_data();
  C2mfModel model(tiny_model_config(fusion::Method::dpc));
  const std::span<const Instance> batch(data.train.instances.data(), 6);
  Tape tape;
  const auto ls = loss_total_tape(tape, model, batch, 0.0);
  CHECK(tape.scalar(ls.total) == tape.scalar(ls.lf));
  CHECK(tape.scalar(ls.lu) > 0.0);
}

TEST_CASE("loss_total matches a naive plain-path loss oracle") {
  auto data = tiny_data();
  for (auto method : {fusion::Method::dpc, fusion::Method::c2dpc,
                      fusion::Method::cwm, fusion::Method::c2wm}) {
    C2mfModel model(tiny_model_config(method));
    const std::span<const Instance> batch(data.train.instances.data(), 5);
    Tape tape;
    const auto ls = loss_total_tape(tape, model, batch, 0.7);

    double lf = 0.0, lu = 0.0;
    for (const Instance& inst : batch) {
      const auto res = model.infer(inst);
      lf += -std::log(std::max(1e-12, res.fused[inst.label]));
      for (const auto& p : res.unimodal_probs)
        lu += -std::log(std::max(1e-12, p[inst.label]));
    }
    lf /= batch.size();
    lu /= batch.size();
    CHECK(tape.scalar(ls.lf) == doctest::Approx(lf).epsilon(1e-10));
    CHECK(tape.scalar(ls.lu) == doctest::Approx(lu).epsilon(1e-10));
    CHECK(tape.scalar(ls.total) ==
          doctest::Approx(lf + 0.7 * lu).epsilon(1e-10));
  }
}

TEST_CASE("gradient_check passes for a static and a context method") {
  auto data = tiny_data();
  for (auto method : {fusion::Method::dpc, fusion::Method::c2wm}) {
    C2mfModel model(tiny_model_config(method));
    const std::span<const Instance> batch(data.train.instances.data(), 4);
    const auto entries = gradient_check(model, batch, 1.0, 25);
    REQUIRE_FALSE(entries.empty());
    for (const auto& e : entries) {
      INFO(e.group);
      CHECK(e.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("train: zero epochs returns empty curves and the initial parameters") {
  auto data = tiny_data();
  C2mfModel model(tiny_model_config(fusion::Method::dpc));
  const auto before = param_values(model);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.regime = Regime::joint;
  const auto report = train(model, data.train, data.val, cfg);
  CHECK(report.epochs.empty());
  CHECK(report.best_epoch == -1);
  CHECK(param_values(model) == before);
}

TEST_CASE("train throws on empty splits and bad config") {
  auto data = tiny_data();
  C2mfModel model(tiny_model_config(fusion::Method::dpc));
  Dataset empty;
  TrainConfig cfg;
  CHECK_THROWS_AS(train(model, empty, data.val, cfg), DataError);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(model, data.train, data.val, bad), UsageError);
}

TEST_CASE("train is deterministic: identical config and seed, identical report") {
  auto data = tiny_data();
  TrainConfig cfg;
  cfg.regime = Regime::joint;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.seed = 11;

  auto run = [&] {
    C2mfModel model(tiny_model_config(fusion::Method::c2dpc));
    const auto report = train(model, data.train, data.val, cfg);
    return std::make_pair(report, param_values(model));
  };
  const auto [r1, p1] = run();
  const auto [r2, p2] = run();
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].train_ltotal == r2.epochs[e].train_ltotal);
    CHECK(r1.epochs[e].val_ltotal == r2.epochs[e].val_ltotal);
    CHECK(r1.epochs[e].train_acc == r2.epochs[e].train_acc);
  }
  CHECK(p1 == p2);
}

TEST_CASE("decoupled phase 2 leaves unimodal parameters bitwise unchanged") {
  auto data = tiny_data();
  C2mfModel model(tiny_model_config(fusion::Method::c2wm));
  TrainConfig cfg;
  cfg.regime = Regime::decoupled;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  // train() itself asserts the freeze invariant at the end of phase 2
  CHECK_NOTHROW(train(model, data.train, data.val, cfg));
}

TEST_CASE("adam on the fusion subset never touches unimodal parameters") {
  auto data = tiny_data();
  C2mfModel model(tiny_model_config(fusion::Method::c2dpc));
  const std::span<const Instance> batch(data.train.instances.data(), 8);
  std::vector<std::vector<double>> before;
  for (auto* p : model.unimodal_params()) before.push_back(p->value);

  ad::Adam adam;
  for (int step = 0; step < 3; ++step) {
    Tape tape;
    const auto ls = loss_total_tape(tape, model, batch, 1.0, true, true);
    tape.backward(ls.total);
    auto fparams = model.fusion_params();
    adam.step(fparams);
    model.params().zero_grad();
  }
  const auto ups = model.unimodal_params();
  for (std::size_t i = 0; i < ups.size(); ++i) CHECK(ups[i]->value == before[i]);
}

TEST_CASE("clean separable data trains to high validation accuracy, every method") {
  auto data = tiny_data(160, 60, 2, 13);
  for (auto method : {fusion::Method::dpc, fusion::Method::c2dpc,
                      fusion::Method::cwm, fusion::Method::c2wm}) {
    C2mfModel model(tiny_model_config(method, 2, 17));
    TrainConfig cfg;
    cfg.regime = Regime::decoupled;
    cfg.epochs = 50;
    cfg.patience = 50;
    cfg.batch_size = 32;
    cfg.learning_rate = 5e-3;
    const auto report = train(model, data.train, data.val, cfg);
    REQUIRE_FALSE(report.epochs.empty());
    const auto out = evaluate_model(model, data.val);
    INFO("method ", fusion::method_name(method), " acc ", out.accuracy);
    CHECK(out.accuracy >= 0.95);
  }
}

TEST_CASE("non-finite loss aborts with a numerical error naming the step") {
  auto data = tiny_data();
  C2mfModel model(tiny_model_config(fusion::Method::dpc));
  // poison one parameter
  model.params().find("circuit.gauss_mean")->value[0] =
      std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.regime = Regime::joint;
  try {
    train(model, data.train, data.val, cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}
