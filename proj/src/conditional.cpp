#include "c2mf/conditional.hpp"

#include <stdexcept>

#include "c2mf/kern/kernels.hpp"

namespace c2mf::cond {

WeightLayout WeightLayout::from_circuit(const pc::Circuit& c) {
  if (!c.prepared)
    throw std::invalid_argument("layout requires a validated circuit");
  WeightLayout layout;
  layout.arity = c.weight_arity;
  layout.offset.resize(layout.arity.size());
  int off = 0;
  for (std::size_t s = 0; s < layout.arity.size(); ++s) {
    layout.offset[s] = off;
    off += layout.arity[s];
  }
  layout.total = off;
  return layout;
}

pc::WeightAssignment static_weights(const WeightLayout& layout,
                                    std::span<const double> flat_logits) {
  if (static_cast<int>(flat_logits.size()) != layout.total)
    throw std::invalid_argument("static_weights: logit vector size mismatch");
  pc::WeightAssignment w;
  w.log_rows.resize(layout.arity.size());
  for (std::size_t s = 0; s < layout.arity.size(); ++s) {
    const int n = layout.arity[s];
    const double* row = flat_logits.data() + layout.offset[s];
    auto& lr = w.log_rows[s];
    lr.resize(n);
    const double lse = kern::log_sum_exp(row, n);
    kern::vadds(row, -lse, lr.data(), n);
  }
  return w;
}

pc::WeightAssignment hypernet_forward(const nn::Mlp& hypernet,
                                      const WeightLayout& layout,
                                      std::span<const double> z) {
  if (hypernet.out_dim() != layout.total)
    throw std::invalid_argument("hypernetwork output does not match weight layout");
  const std::vector<double> flat = hypernet.forward(z);
  return static_weights(layout, flat);
}

std::vector<ad::Tape::Slot> weight_rows_tape(ad::Tape& tape,
                                             ad::Tape::Slot flat_logits,
                                             const WeightLayout& layout) {
  if (tape.size(flat_logits) != layout.total)
    throw std::invalid_argument("weight_rows_tape: logit vector size mismatch");
  std::vector<ad::Tape::Slot> rows;
  rows.reserve(layout.arity.size());
  for (std::size_t s = 0; s < layout.arity.size(); ++s)
    rows.push_back(tape.log_softmax(
        tape.slice(flat_logits, layout.offset[s], layout.arity[s])));
  return rows;
}

}  // namespace c2mf::cond
