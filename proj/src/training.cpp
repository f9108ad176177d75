#include "c2mf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "c2mf/errors.hpp"
#include "c2mf/kern/kernels.hpp"
#include "c2mf/rng.hpp"

namespace c2mf {

using ad::Tape;
using Slot = ad::Tape::Slot;

Regime regime_from_name(std::string_view name) {
  if (name == "joint") return Regime::joint;
  if (name == "decoupled") return Regime::decoupled;
  throw UsageError("unknown training regime: " + std::string(name));
}

std::string_view regime_name(Regime r) {
  return r == Regime::joint ? "joint" : "decoupled";
}

static int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

LossSlots loss_total_tape(ad::Tape& tape, const C2mfModel& model,
                          std::span<const Instance> batch, double mu,
                          bool with_fusion, bool frozen_unimodal) {
  if (batch.empty()) throw DataError("empty batch");
  const auto bindings = model.bind(tape);
  std::vector<Slot> lfs, lus;
  LossSlots out;
  lfs.reserve(batch.size());
  lus.reserve(batch.size());
  out.fused_scores.reserve(batch.size());
  for (const Instance& inst : batch) {
    auto g = model.build_instance_graph(tape, bindings, inst, with_fusion,
                                        frozen_unimodal);
    lus.push_back(g.unimodal_loss);
    if (with_fusion) {
      lfs.push_back(g.fused_loss);
      out.fused_scores.push_back(g.fused_scores);
    } else {
      // reporting only: average unimodal probabilities
      Slot avg = tape.zeros(model.config().num_classes);
      for (Slot p : g.probs)
        avg = tape.add(avg, tape.scale(p, 1.0 / model.config().num_modalities));
      out.fused_scores.push_back(avg);
    }
  }
  out.lu = tape.mean(tape.stack(lus));
  if (with_fusion) {
    out.lf = tape.mean(tape.stack(lfs));
    out.total = tape.add(out.lf, tape.scale(out.lu, mu));
  } else {
    out.total = out.lu;
  }
  return out;
}

EvalOutputs evaluate_model(const C2mfModel& model, const Dataset& data) {
  if (data.empty()) throw DataError("empty dataset");
  EvalOutputs out;
  out.fused.reserve(data.size());
  out.reports.reserve(data.size());
  double lf = 0.0, lu = 0.0;
  int correct = 0;
  for (const Instance& inst : data.instances) {
    auto res = model.infer(inst);
    const double fy = res.fused[inst.label];
    lf += -std::log(fy < 1e-12 ? 1e-12 : fy);
    for (const auto& p : res.unimodal_probs) {
      const double py = p[inst.label];
      lu += -std::log(py < 1e-12 ? 1e-12 : py);
    }
    if (argmax_lowest(res.fused) == inst.label) ++correct;
    out.fused.push_back(std::move(res.fused));
    out.reports.push_back(std::move(res.report));
  }
  const double n = static_cast<double>(data.size());
  out.lf = lf / n;
  out.lu = lu / n;
  out.accuracy = correct / n;
  return out;
}

namespace {

struct PhasePlan {
  int phase;
  bool with_fusion;
  bool frozen_unimodal;
  std::vector<ad::Parameter*> trainable;
};

std::vector<std::vector<double>> snapshot_params(const C2mfModel& model) {
  std::vector<std::vector<double>> snap;
  const auto& store = model.params();
  snap.reserve(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) snap.push_back(store.at(i).value);
  return snap;
}

void restore_params(C2mfModel& model, const std::vector<std::vector<double>>& snap) {
  auto& store = model.params();
  for (std::size_t i = 0; i < store.count(); ++i) store.at(i).value = snap[i];
}

}  // namespace

TrainReport train(C2mfModel& model, const Dataset& train_split,
                  const Dataset& val_split, const TrainConfig& cfg) {
  if (train_split.empty() || val_split.empty())
    throw DataError("train/validation splits must be nonempty");
  if (cfg.batch_size < 1 || cfg.epochs < 0)
    throw UsageError("batch_size must be >= 1 and epochs >= 0");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.mu) || cfg.mu < 0.0)
    throw UsageError("bad learning_rate or mu");

  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;

  std::vector<PhasePlan> phases;
  if (cfg.regime == Regime::joint) {
    phases.push_back({0, true, false, model.all_params()});
  } else {
    phases.push_back({1, false, false, model.unimodal_params()});
    phases.push_back({2, true, true, model.fusion_params()});
  }

  for (const PhasePlan& plan : phases) {
    ad::Adam adam({cfg.learning_rate});
    double best_metric = std::numeric_limits<double>::infinity();
    auto best_snap = snapshot_params(model);
    int stale = 0;
    Tape tape;
    // phase 2 must leave the unimodal parameters bitwise untouched
    std::vector<std::vector<double>> frozen_before;
    if (plan.frozen_unimodal)
      for (ad::Parameter* p : model.unimodal_params())
        frozen_before.push_back(p->value);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      // seeded shuffle
      std::vector<int> order(train_split.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      Rng shuffle_rng(derive_seed(cfg.seed, "shuffle",
                                  static_cast<std::uint64_t>(plan.phase) * 1000003 + epoch));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.index(static_cast<int>(i))]);
      std::vector<Instance> shuffled;
      shuffled.reserve(order.size());
      for (int idx : order) shuffled.push_back(train_split.instances[idx]);

      double sum_lf = 0.0, sum_lu = 0.0;
      long correct = 0;
      long seen = 0;
      int step = 0;
      for (std::size_t off = 0; off < shuffled.size(); off += cfg.batch_size, ++step) {
        const std::size_t len = std::min<std::size_t>(cfg.batch_size, shuffled.size() - off);
        const std::span<const Instance> batch(shuffled.data() + off, len);
        tape.reset();
        LossSlots ls =
            loss_total_tape(tape, model, batch, cfg.mu, plan.with_fusion,
                            plan.frozen_unimodal);
        const double total = tape.scalar(ls.total);
        if (!std::isfinite(total))
          throw NumericalError("non-finite loss at phase " + std::to_string(plan.phase) +
                               " epoch " + std::to_string(epoch) + " step " +
                               std::to_string(step));
        const double lu = tape.scalar(ls.lu);
        const double lf = plan.with_fusion ? tape.scalar(ls.lf) : 0.0;
        sum_lf += lf * len;
        sum_lu += lu * len;
        for (std::size_t i = 0; i < len; ++i) {
          const auto scores = tape.value(ls.fused_scores[i]);
          if (argmax_lowest(scores) == batch[i].label) ++correct;
        }
        seen += len;
        tape.backward(ls.total);
        adam.step(plan.trainable);
        model.params().zero_grad();
      }

      EpochStats st;
      st.phase = plan.phase;
      st.epoch = epoch;
      st.train_lf = seen ? sum_lf / seen : 0.0;
      st.train_lu = seen ? sum_lu / seen : 0.0;
      st.train_ltotal = plan.phase == 0 ? st.train_lf + cfg.mu * st.train_lu
                        : plan.phase == 1 ? st.train_lu
                                          : st.train_lf;
      st.train_acc = seen ? static_cast<double>(correct) / seen : 0.0;

      EvalOutputs val = evaluate_model(model, val_split);
      st.val_lf = val.lf;
      st.val_lu = val.lu;
      st.val_ltotal = val.lf + cfg.mu * val.lu;
      st.val_acc = val.accuracy;
      report.epochs.push_back(st);

      const double monitor = plan.phase == 1   ? st.val_lu
                             : plan.phase == 2 ? st.val_lf
                                               : st.val_ltotal;
      if (monitor < best_metric) {
        best_metric = monitor;
        best_snap = snapshot_params(model);
        report.best_epoch = static_cast<int>(report.epochs.size()) - 1;
        stale = 0;
      } else if (++stale > cfg.patience) {
        break;
      }
    }
    restore_params(model, best_snap);
    if (plan.frozen_unimodal) {
      const auto ups = model.unimodal_params();
      for (std::size_t i = 0; i < ups.size(); ++i)
        if (ups[i]->value != frozen_before[i])
          throw std::logic_error("frozen unimodal parameters changed in phase 2");
    }
  }

  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<GradCheckEntry> gradient_check(C2mfModel& model,
                                           std::span<const Instance> batch,
                                           double mu, int max_per_group,
                                           std::uint64_t seed) {
  std::vector<GradCheckEntry> out;
  auto loss_value = [&]() {
    Tape tape;
    LossSlots ls = loss_total_tape(tape, model, batch, mu, true, false);
    return tape.scalar(ls.total);
  };

  model.params().zero_grad();
  Tape tape;
  LossSlots ls = loss_total_tape(tape, model, batch, mu, true, false);
  tape.backward(ls.total);

  auto& store = model.params();
  const double h = 1e-5;
  for (std::size_t gi = 0; gi < store.count(); ++gi) {
    ad::Parameter& p = store.at(gi);
    GradCheckEntry entry;
    entry.group = p.name;
    const int n = static_cast<int>(p.size());
    const int take = std::min(max_per_group, n);
    Rng rng(derive_seed(seed, "gradcheck", gi));
    // sample without replacement via partial shuffle
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < take; ++i)
      std::swap(idx[i], idx[i + rng.index(n - i)]);
    for (int i = 0; i < take; ++i) {
      const int j = idx[i];
      const double saved = p.value[j];
      p.value[j] = saved + h;
      const double up = loss_value();
      p.value[j] = saved - h;
      const double down = loss_value();
      p.value[j] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double adg = p.grad[j];
      const double rel = std::abs(adg - fd) /
                         std::max({std::abs(adg), std::abs(fd), 1e-3});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked;
    }
    out.push_back(std::move(entry));
  }
  model.params().zero_grad();
  return out;
}

}  // namespace c2mf
