#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "c2mf/autodiff.hpp"
#include "c2mf/circuit.hpp"
#include "c2mf/conditional.hpp"
#include "c2mf/dataset.hpp"
#include "c2mf/fusion.hpp"
#include "c2mf/model.hpp"

// The full architecture: per-modality encoders E_m and predictors f_m, the
// joint context aggregator, the weight source (static logits or hypernetwork),
// and the circuit. Both a plain inference path and a tape path (for training
// gradients) are provided; they implement the same math.

namespace c2mf {

struct CircuitStructureConfig {
  int depth = 2;
  int num_sums = 4;
  int num_repetitions = 2;
};

struct ModelConfig {
  int num_modalities = 2;
  int num_classes = 10;
  std::vector<int> feature_dims;
  int encoder_hidden = 32;
  int d_h = 32;             // unimodal embedding width
  int aggregator_hidden = 32;
  int d_z = 16;             // context embedding width
  int hypernet_hidden = 32;
  CircuitStructureConfig circuit;
  fusion::Method method = fusion::Method::c2dpc;
  std::uint64_t seed = 1;
};

class C2mfModel {
 public:
  // Fresh model: builds the circuit and initializes all parameters from
  // cfg.seed. When `circuit` is provided (checkpoint load) its structure and
  // leaf parameters are adopted instead of building a new one.
  explicit C2mfModel(ModelConfig cfg, std::optional<pc::Circuit> circuit = {});

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const pc::Circuit& circuit() const { return circuit_; }
  const cond::WeightLayout& layout() const { return layout_; }

  // Leaf parameters as currently trained (views into the ParamStore).
  pc::LeafParamsView leaf_view() const;
  // Circuit with leaf parameters synced back in (serialization).
  pc::Circuit circuit_with_leaves() const;

  // ---- plain inference ----
  std::vector<double> encode(int m, std::span<const double> x) const;
  std::vector<double> predict_unimodal(int m, std::span<const double> h) const;
  std::vector<double> aggregate_context(const std::vector<std::vector<double>>& hs) const;
  pc::WeightAssignment weights_for(const std::vector<std::vector<double>>& hs) const;

  struct InferenceResult {
    std::vector<std::vector<double>> unimodal_probs;  // p_m
    std::vector<double> fused;                        // method's prediction
    fusion::CredibilityReport report;
  };
  InferenceResult infer(const Instance& inst) const;

  // ---- parameter groups ----
  std::vector<ad::Parameter*> unimodal_params() const;  // encoders + predictors
  std::vector<ad::Parameter*> fusion_params() const;    // leaves + weights (+ aggregator)
  std::vector<ad::Parameter*> all_params() const;

  // ---- tape path ----
  struct TapeBindings {   // per-tape parameter slots
    ad::Tape::Slot leaf_mean, leaf_log_std, cat_logits;
    std::vector<ad::Tape::Slot> static_rows;  // static methods: shared rows
  };
  TapeBindings bind(ad::Tape& tape) const;

  struct InstanceGraph {
    std::vector<ad::Tape::Slot> pred_logits;  // per modality
    std::vector<ad::Tape::Slot> probs;        // softmax(pred_logits)
    ad::Tape::Slot fused_loss;                // -log fused[y]
    ad::Tape::Slot unimodal_loss;             // sum_m CE(y, p_m)
    ad::Tape::Slot fused_scores;              // K-wide; argmax = prediction
  };

  // Builds one instance's forward graph. `frozen_unimodal` replaces encoder /
  // predictor outputs with constants (decoupled phase 2). `with_fusion`
  // controls whether the circuit half is built at all (phase 1 skips it).
  InstanceGraph build_instance_graph(ad::Tape& tape, const TapeBindings& b,
                                     const Instance& inst, bool with_fusion,
                                     bool frozen_unimodal) const;

  // Circuit posterior slots used by the CWM/C2WM branch and by tests:
  // K-lane log joint for a mask, from leaf-input slots and weight-row slots.
  ad::Tape::Slot circuit_joint_tape(ad::Tape& tape, const TapeBindings& b,
                                    std::span<const ad::Tape::Slot> weight_rows,
                                    std::span<const ad::Tape::Slot> leaf_inputs,
                                    const pc::MarginalMask& mask) const;

 private:
  ModelConfig cfg_;
  ad::ParamStore params_;
  pc::Circuit circuit_;  // structure only; leaf tensors live in params_
  cond::WeightLayout layout_;
  std::vector<nn::Mlp> encoders_, predictors_;
  std::optional<nn::Mlp> aggregator_, hypernet_;
  ad::Parameter* static_logits_ = nullptr;
  ad::Parameter* leaf_mean_ = nullptr;
  ad::Parameter* leaf_log_std_ = nullptr;
  ad::Parameter* cat_logits_ = nullptr;
};

// KL divergence on tape (clamped like fusion::kl_divergence, floored at 0).
ad::Tape::Slot kl_divergence_tape(ad::Tape& tape, ad::Tape::Slot p, ad::Tape::Slot q);

}  // namespace c2mf
