#pragma once

#include <span>
#include <vector>

#include "c2mf/autodiff.hpp"
#include "c2mf/circuit.hpp"
#include "c2mf/model.hpp"

// Sum-weight production: either static learnable logits (DPC/CWM) or a
// hypernetwork mapping the joint context embedding z to the full flat logit
// vector (C2DPC/C2WM). Rows are softmax-normalized at this boundary.

namespace c2mf::cond {

// How the flat logit vector splits into per-sum-node rows, in weight-slot
// order.
struct WeightLayout {
  std::vector<int> arity;
  std::vector<int> offset;
  int total = 0;

  static WeightLayout from_circuit(const pc::Circuit& c);
};

struct HypernetSpec {
  nn::MlpSpec mlp;      // trunk + linear head; widths.back() == layout.total
  WeightLayout layout;
};

// Softmax per row of a flat logit vector.
pc::WeightAssignment static_weights(const WeightLayout& layout,
                                    std::span<const double> flat_logits);

// Theta = g_phi(z), normalized per row.
pc::WeightAssignment hypernet_forward(const nn::Mlp& hypernet,
                                      const WeightLayout& layout,
                                      std::span<const double> z);

// Tape variants: one log-softmaxed row slot per weight slot.
std::vector<ad::Tape::Slot> weight_rows_tape(ad::Tape& tape,
                                             ad::Tape::Slot flat_logits,
                                             const WeightLayout& layout);

}  // namespace c2mf::cond
