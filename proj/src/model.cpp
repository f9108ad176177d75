#include "c2mf/model.hpp"

#include <cmath>
#include <stdexcept>

#include "c2mf/kern/kernels.hpp"

namespace c2mf::nn {

Mlp Mlp::create(ad::ParamStore& store, const std::string& prefix, MlpSpec spec,
                Rng& init_rng) {
  if (spec.widths.size() < 2)
    throw std::invalid_argument("MlpSpec needs at least [in, out]");
  for (int w : spec.widths)
    if (w < 1) throw std::invalid_argument("MlpSpec widths must be positive");

  Mlp mlp;
  mlp.spec_ = std::move(spec);
  const auto& widths = mlp.spec_.widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = sigma * init_rng.normal();
    mlp.w_.push_back(&store.create(prefix + ".w" + std::to_string(l), std::move(w)));
    mlp.b_.push_back(&store.create(prefix + ".b" + std::to_string(l),
                                   std::vector<double>(out, 0.0)));
  }
  return mlp;
}

Mlp Mlp::bind(ad::ParamStore& store, const std::string& prefix, MlpSpec spec) {
  Mlp mlp;
  mlp.spec_ = std::move(spec);
  const auto& widths = mlp.spec_.widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    ad::Parameter* w = store.find(prefix + ".w" + std::to_string(l));
    ad::Parameter* b = store.find(prefix + ".b" + std::to_string(l));
    if (!w || !b)
      throw std::invalid_argument("missing parameters for MLP " + prefix);
    const std::size_t in = widths[l], out = widths[l + 1];
    if (w->size() != in * out || b->size() != out)
      throw std::invalid_argument("parameter shape mismatch for MLP " + prefix);
    mlp.w_.push_back(w);
    mlp.b_.push_back(b);
  }
  return mlp;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != in_dim())
    throw std::invalid_argument("MLP input dimension mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    const int in = spec_.widths[l], out = spec_.widths[l + 1];
    next.assign(out, 0.0);
    const double* W = w_[l]->value.data();
    for (int r = 0; r < out; ++r)
      next[r] = kern::dot(W + static_cast<std::size_t>(r) * in, cur.data(), in) +
                b_[l]->value[r];
    if (l + 1 < w_.size()) {
      if (spec_.act == MlpSpec::Act::relu) {
        for (double& v : next) v = v > 0.0 ? v : 0.0;
      } else {
        for (double& v : next) v = std::tanh(v);
      }
    }
    cur.swap(next);
  }
  return cur;
}

ad::Tape::Slot Mlp::forward_tape(ad::Tape& tape, ad::Tape::Slot x) const {
  if (tape.size(x) != in_dim())
    throw std::invalid_argument("MLP input dimension mismatch");
  ad::Tape::Slot cur = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    const int in = spec_.widths[l], out = spec_.widths[l + 1];
    ad::Tape::Slot lin = tape.add(tape.matvec(tape.param(*w_[l]), out, in, cur),
                                  tape.param(*b_[l]));
    if (l + 1 < w_.size())
      cur = spec_.act == MlpSpec::Act::relu ? tape.relu(lin) : tape.tanh(lin);
    else
      cur = lin;
  }
  return cur;
}

std::vector<ad::Parameter*> Mlp::parameters() const {
  std::vector<ad::Parameter*> out;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    out.push_back(w_[l]);
    out.push_back(b_[l]);
  }
  return out;
}

std::vector<double> to_leaf_inputs(std::span<const double> p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double v = p[i];
    v = v < kLeafInputClamp ? kLeafInputClamp : (v > 1.0 ? 1.0 : v);
    out[i] = v;
  }
  kern::vlog(out.data(), out.data(), out.size());
  return out;
}

ad::Tape::Slot to_leaf_inputs_tape(ad::Tape& tape, ad::Tape::Slot probs) {
  return tape.log(tape.clamp(probs, kLeafInputClamp, 1.0));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double m = kern::reduce_max(logits.data(), logits.size());
  kern::vadds(logits.data(), -m, p.data(), p.size());
  kern::vexp(p.data(), p.data(), p.size());
  const double z = kern::reduce_sum(p.data(), p.size());
  kern::vscale(p.data(), 1.0 / z, p.data(), p.size());
  return p;
}

}  // namespace c2mf::nn
