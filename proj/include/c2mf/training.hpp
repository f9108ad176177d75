#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "c2mf/c2mf_model.hpp"
#include "c2mf/dataset.hpp"

// End-to-end joint training (L_total = L_f + mu * L_u) and the decoupled
// two-phase regime (unimodal supervision first, fusion second with the
// unimodal parameters frozen).

namespace c2mf {

enum class Regime { joint, decoupled };
Regime regime_from_name(std::string_view name);
std::string_view regime_name(Regime r);

struct TrainConfig {
  Regime regime = Regime::decoupled;
  double mu = 1.0;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 100;
  int patience = 10;  // early stop on the phase's validation loss
  std::uint64_t seed = 1;
};

struct EpochStats {
  int phase = 0;  // 0 joint, 1/2 decoupled phases
  int epoch = 0;
  double train_lf = 0.0, train_lu = 0.0, train_ltotal = 0.0, train_acc = 0.0;
  double val_lf = 0.0, val_lu = 0.0, val_ltotal = 0.0, val_acc = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // index into `epochs` of the retained checkpoint
  double wall_clock_sec = 0.0;
};

// Trains in place; on return the model holds the best-validation parameters.
// Throws NumericalError (see runner.hpp) when a batch loss goes non-finite.
TrainReport train(C2mfModel& model, const Dataset& train_split,
                  const Dataset& val_split, const TrainConfig& cfg);

struct LossSlots {
  ad::Tape::Slot lf = ad::Tape::kNoSlot;
  ad::Tape::Slot lu = ad::Tape::kNoSlot;
  ad::Tape::Slot total = ad::Tape::kNoSlot;
  std::vector<ad::Tape::Slot> fused_scores;  // per instance (when fusion built)
};

// Records L_f, L_u, L_total = L_f + mu*L_u for a batch on the given tape.
// `with_fusion=false` drops the fusion half (then total = L_u);
// `frozen_unimodal=true` treats encoder/predictor outputs as constants.
LossSlots loss_total_tape(ad::Tape& tape, const C2mfModel& model,
                          std::span<const Instance> batch, double mu,
                          bool with_fusion = true, bool frozen_unimodal = false);

// Plain-path dataset evaluation shared by validation and the CLI.
struct EvalOutputs {
  std::vector<std::vector<double>> fused;  // per instance, method's prediction
  std::vector<fusion::CredibilityReport> reports;
  double lf = 0.0, lu = 0.0;
  double accuracy = 0.0;
};
EvalOutputs evaluate_model(const C2mfModel& model, const Dataset& data);

struct GradCheckEntry {
  std::string group;
  double max_rel_err = 0.0;
  int checked = 0;
};

// Central finite differences (h = 1e-5) against the tape gradients of
// L_total on a small batch; samples up to `max_per_group` scalars per
// parameter tensor. Relative error uses a 1e-3 denominator floor so
// noise-dominated near-zero gradients do not produce spurious failures.
std::vector<GradCheckEntry> gradient_check(C2mfModel& model,
                                           std::span<const Instance> batch,
                                           double mu, int max_per_group = 50,
                                           std::uint64_t seed = 1234);

}  // namespace c2mf
