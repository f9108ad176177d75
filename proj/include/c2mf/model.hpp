#pragma once

#include <span>
#include <string>
#include <vector>

#include "c2mf/autodiff.hpp"
#include "c2mf/rng.hpp"

// Unimodal encoders/predictors and the joint context aggregator are all plain
// MLPs; this header holds the shared MLP machinery plus the transform that
// bridges predictive distributions to circuit leaf inputs.

namespace c2mf::nn {

struct MlpSpec {
  enum class Act { relu, tanh };
  std::vector<int> widths;  // [in, hidden..., out]
  Act act = Act::relu;
};

// Parameters live in a ParamStore under `<prefix>.w<i>` / `<prefix>.b<i>`.
// Hidden layers apply the activation; the output layer is linear.
class Mlp {
 public:
  Mlp() = default;
  static Mlp create(ad::ParamStore& store, const std::string& prefix,
                    MlpSpec spec, Rng& init_rng);
  // Rebinds to parameters already present in the store (checkpoint load).
  static Mlp bind(ad::ParamStore& store, const std::string& prefix, MlpSpec spec);

  std::vector<double> forward(std::span<const double> x) const;
  ad::Tape::Slot forward_tape(ad::Tape& tape, ad::Tape::Slot x) const;

  int in_dim() const { return spec_.widths.front(); }
  int out_dim() const { return spec_.widths.back(); }
  const MlpSpec& spec() const { return spec_; }
  std::vector<ad::Parameter*> parameters() const;

 private:
  MlpSpec spec_;
  std::vector<ad::Parameter*> w_;  // row-major (out x in) per layer
  std::vector<ad::Parameter*> b_;
};

// log(clamp(p, 1e-6, 1)) elementwise: the circuit-leaf representation of a
// predictive distribution.
constexpr double kLeafInputClamp = 1e-6;
std::vector<double> to_leaf_inputs(std::span<const double> p);
ad::Tape::Slot to_leaf_inputs_tape(ad::Tape& tape, ad::Tape::Slot probs);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace c2mf::nn
