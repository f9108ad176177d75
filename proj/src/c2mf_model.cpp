#include "c2mf/c2mf_model.hpp"

#include <cmath>
#include <stdexcept>

#include "c2mf/kern/kernels.hpp"

namespace c2mf {

using ad::Tape;
using Slot = ad::Tape::Slot;

C2mfModel::C2mfModel(ModelConfig cfg, std::optional<pc::Circuit> circuit)
    : cfg_(std::move(cfg)) {
  const int M = cfg_.num_modalities;
  const int K = cfg_.num_classes;
  if (M < 1 || K < 2) throw std::invalid_argument("model needs M >= 1, K >= 2");
  if (static_cast<int>(cfg_.feature_dims.size()) != M)
    throw std::invalid_argument("feature_dims size must equal num_modalities");

  if (circuit) {
    circuit_ = std::move(*circuit);
    if (!circuit_.prepared) {
      pc::ValidationReport rep = pc::validate(circuit_);
      if (!rep.ok())
        throw std::invalid_argument("invalid circuit: " + rep.to_string());
    }
    if (circuit_.num_modalities != M || circuit_.num_classes != K)
      throw std::invalid_argument("circuit does not match model dimensions");
    for (int d : circuit_.leaf_dims)
      if (d != K)
        throw std::invalid_argument("circuit leaf_dims must equal num_classes");
  } else {
    circuit_ = pc::build_random_tensorized(
        M, K, std::vector<int>(M, K), cfg_.circuit.depth, cfg_.circuit.num_sums,
        cfg_.circuit.num_repetitions, derive_seed(cfg_.seed, "circuit"));
    // Leaf inputs are log-probabilities in [log 1e-6, 0]; rescale the generic
    // N(0,1)/sigma=1 leaf initialization onto that range so no single mixture
    // component dominates every class lane at the start of training. The
    // categorical leaves get a small jitter: at exactly uniform logits every
    // class-lane share is equal and gradient descent cannot break the tie.
    const double mid = 0.5 * std::log(nn::kLeafInputClamp);
    for (double& m : circuit_.leaf.gauss_mean) m = mid + 4.0 * m;
    for (double& s : circuit_.leaf.gauss_log_std) s = std::log(5.0);
    Rng jitter(derive_seed(cfg_.seed, "cat-jitter"));
    for (double& v : circuit_.leaf.cat_logits) v = 0.1 * jitter.normal();
  }
  layout_ = cond::WeightLayout::from_circuit(circuit_);

  // leaf tensors move into the parameter store; the circuit keeps structure
  leaf_mean_ = &params_.create("circuit.gauss_mean", std::move(circuit_.leaf.gauss_mean));
  leaf_log_std_ =
      &params_.create("circuit.gauss_log_std", std::move(circuit_.leaf.gauss_log_std));
  cat_logits_ = &params_.create("circuit.cat_logits", std::move(circuit_.leaf.cat_logits));
  circuit_.leaf = {};

  for (int m = 0; m < M; ++m) {
    const std::string eprefix = "encoder" + std::to_string(m);
    Rng erng(derive_seed(cfg_.seed, eprefix));
    encoders_.push_back(nn::Mlp::create(
        params_, eprefix,
        {{cfg_.feature_dims[m], cfg_.encoder_hidden, cfg_.d_h}}, erng));
    const std::string pprefix = "predictor" + std::to_string(m);
    Rng prng(derive_seed(cfg_.seed, pprefix));
    predictors_.push_back(nn::Mlp::create(params_, pprefix, {{cfg_.d_h, K}}, prng));
  }

  if (fusion::uses_context(cfg_.method)) {
    Rng arng(derive_seed(cfg_.seed, "aggregator"));
    aggregator_ = nn::Mlp::create(
        params_, "aggregator", {{M * cfg_.d_h, cfg_.aggregator_hidden, cfg_.d_z}},
        arng);
    Rng hrng(derive_seed(cfg_.seed, "hypernet"));
    hypernet_ = nn::Mlp::create(
        params_, "hypernet", {{cfg_.d_z, cfg_.hypernet_hidden, layout_.total}},
        hrng);
  } else {
    static_logits_ = &params_.create("fusion.sum_logits",
                                     std::vector<double>(layout_.total, 0.0));
  }
}

pc::LeafParamsView C2mfModel::leaf_view() const {
  pc::LeafParamsView v;
  v.gauss_mean = leaf_mean_->value;
  v.gauss_log_std = leaf_log_std_->value;
  v.cat_logits = cat_logits_->value;
  return v;
}

pc::Circuit C2mfModel::circuit_with_leaves() const {
  pc::Circuit c = circuit_;
  c.leaf.gauss_mean = leaf_mean_->value;
  c.leaf.gauss_log_std = leaf_log_std_->value;
  c.leaf.cat_logits = cat_logits_->value;
  return c;
}

std::vector<double> C2mfModel::encode(int m, std::span<const double> x) const {
  return encoders_[m].forward(x);
}

std::vector<double> C2mfModel::predict_unimodal(int m, std::span<const double> h) const {
  return nn::softmax(predictors_[m].forward(h));
}

std::vector<double> C2mfModel::aggregate_context(
    const std::vector<std::vector<double>>& hs) const {
  if (!aggregator_) throw std::logic_error("static method has no aggregator");
  if (static_cast<int>(hs.size()) != cfg_.num_modalities)
    throw std::invalid_argument("aggregate_context: all modalities required");
  std::vector<double> cat;
  cat.reserve(static_cast<std::size_t>(cfg_.num_modalities) * cfg_.d_h);
  for (const auto& h : hs) {
    if (static_cast<int>(h.size()) != cfg_.d_h)
      throw std::invalid_argument("aggregate_context: embedding width mismatch");
    cat.insert(cat.end(), h.begin(), h.end());
  }
  return aggregator_->forward(cat);
}

pc::WeightAssignment C2mfModel::weights_for(
    const std::vector<std::vector<double>>& hs) const {
  if (fusion::uses_context(cfg_.method)) {
    const std::vector<double> z = aggregate_context(hs);
    return cond::hypernet_forward(*hypernet_, layout_, z);
  }
  return cond::static_weights(layout_, static_logits_->value);
}

C2mfModel::InferenceResult C2mfModel::infer(const Instance& inst) const {
  const int M = cfg_.num_modalities;
  std::vector<std::vector<double>> hs(M);
  InferenceResult res;
  res.unimodal_probs.resize(M);
  for (int m = 0; m < M; ++m) {
    hs[m] = encode(m, inst.x[m]);
    res.unimodal_probs[m] = predict_unimodal(m, hs[m]);
  }
  const pc::WeightAssignment w = weights_for(hs);
  res.report = fusion::compute_csic(circuit_, leaf_view(), w, res.unimodal_probs);
  res.fused = fusion::uses_weighted_mean(cfg_.method)
                  ? fusion::fuse_weighted_mean(res.report, res.unimodal_probs)
                  : res.report.full_posterior;
  return res;
}

std::vector<ad::Parameter*> C2mfModel::unimodal_params() const {
  std::vector<ad::Parameter*> out;
  for (const auto& e : encoders_)
    for (auto* p : e.parameters()) out.push_back(p);
  for (const auto& f : predictors_)
    for (auto* p : f.parameters()) out.push_back(p);
  return out;
}

std::vector<ad::Parameter*> C2mfModel::fusion_params() const {
  std::vector<ad::Parameter*> out{leaf_mean_, leaf_log_std_, cat_logits_};
  if (static_logits_) out.push_back(static_logits_);
  if (aggregator_)
    for (auto* p : aggregator_->parameters()) out.push_back(p);
  if (hypernet_)
    for (auto* p : hypernet_->parameters()) out.push_back(p);
  return out;
}

std::vector<ad::Parameter*> C2mfModel::all_params() const {
  std::vector<ad::Parameter*> out;
  for (std::size_t i = 0; i < params_.count(); ++i)
    out.push_back(const_cast<ad::Parameter*>(&params_.at(i)));
  return out;
}

C2mfModel::TapeBindings C2mfModel::bind(ad::Tape& tape) const {
  TapeBindings b;
  b.leaf_mean = tape.param(*leaf_mean_);
  b.leaf_log_std = tape.param(*leaf_log_std_);
  b.cat_logits = tape.param(*cat_logits_);
  if (static_logits_)
    b.static_rows =
        cond::weight_rows_tape(tape, tape.param(*static_logits_), layout_);
  return b;
}

Slot C2mfModel::circuit_joint_tape(ad::Tape& tape, const TapeBindings& b,
                                   std::span<const Slot> weight_rows,
                                   std::span<const Slot> leaf_inputs,
                                   const pc::MarginalMask& mask) const {
  const pc::Circuit& c = circuit_;
  const int K = cfg_.num_classes;
  const int n = static_cast<int>(c.nodes.size());
  const int target_var = c.var_index(pc::VariableId::target());

  pc::ScopeSet masked;
  masked.resize(c.total_vars());
  for (int m : mask.marginalized_modalities)
    for (int d = 0; d < c.leaf_dims[m]; ++d)
      masked.set(c.var_index(pc::VariableId::modality_dim(m, d)));
  if (mask.target_marginalized) masked.set(target_var);

  const Slot zero = tape.constant_scalar(0.0);
  std::vector<Slot> slot(n, Tape::kNoSlot);
  std::vector<int> width(n, 1);
  std::vector<Slot> kids;

  for (int i = 0; i < n; ++i) {
    const pc::CircuitNode& nd = c.nodes[i];
    if (c.scope[i].is_subset_of(masked)) {
      slot[i] = zero;
      width[i] = 1;
      continue;
    }
    const bool lanes = c.scope[i].test(target_var) && !mask.target_marginalized;
    width[i] = lanes ? K : 1;
    switch (nd.kind) {
      case pc::NodeKind::gaussian_leaf:
        slot[i] = tape.gaussian_logpdf(leaf_inputs[nd.var.modality], nd.var.dim,
                                       b.leaf_mean, b.leaf_log_std, nd.param_index);
        break;
      case pc::NodeKind::categorical_leaf:
        slot[i] = tape.log_softmax(
            tape.slice(b.cat_logits, nd.param_index * K, K));
        break;
      case pc::NodeKind::product: {
        Slot cur = tape.zeros(width[i]);
        for (std::int32_t ch : nd.children)
          cur = width[ch] == width[i] ? tape.add(cur, slot[ch])
                                      : tape.add_scalar(cur, slot[ch]);
        slot[i] = cur;
        break;
      }
      case pc::NodeKind::sum: {
        kids.clear();
        for (std::int32_t ch : nd.children) kids.push_back(slot[ch]);
        slot[i] = tape.weighted_lse(kids, weight_rows[nd.weight_slot]);
        break;
      }
    }
  }
  return slot[c.root];
}

Slot kl_divergence_tape(ad::Tape& tape, Slot p, Slot q) {
  const Slot pc = tape.clamp(p, fusion::kKlClamp, 1.0);
  const Slot qc = tape.clamp(q, fusion::kKlClamp, 1.0);
  const Slot diff = tape.sub(tape.log(pc), tape.log(qc));
  return tape.relu(tape.dot(p, diff));
}

C2mfModel::InstanceGraph C2mfModel::build_instance_graph(
    ad::Tape& tape, const TapeBindings& b, const Instance& inst,
    bool with_fusion, bool frozen_unimodal) const {
  const int M = cfg_.num_modalities;
  const int K = cfg_.num_classes;
  if (inst.label < 0 || inst.label >= K)
    throw std::invalid_argument("label out of range");

  InstanceGraph g;
  g.pred_logits.resize(M);
  g.probs.resize(M);
  std::vector<Slot> h_slots(M, Tape::kNoSlot);
  std::vector<std::vector<double>> h_plain;

  if (frozen_unimodal) {
    h_plain.resize(M);
    for (int m = 0; m < M; ++m) {
      h_plain[m] = encoders_[m].forward(inst.x[m]);
      g.pred_logits[m] = tape.constant(predictors_[m].forward(h_plain[m]));
      g.probs[m] = tape.softmax(g.pred_logits[m]);
    }
  } else {
    for (int m = 0; m < M; ++m) {
      const Slot x = tape.constant(inst.x[m]);
      h_slots[m] = encoders_[m].forward_tape(tape, x);
      g.pred_logits[m] = predictors_[m].forward_tape(tape, h_slots[m]);
      g.probs[m] = tape.softmax(g.pred_logits[m]);
    }
  }

  // L_u contribution: sum over modalities of CE(y, p_m)
  std::vector<Slot> ces;
  ces.reserve(M);
  for (int m = 0; m < M; ++m)
    ces.push_back(tape.cross_entropy_logits(g.pred_logits[m], inst.label));
  g.unimodal_loss = tape.sum(tape.stack(ces));

  if (!with_fusion) {
    g.fused_loss = Tape::kNoSlot;
    g.fused_scores = Tape::kNoSlot;
    return g;
  }

  // weight rows
  std::vector<Slot> rows;
  if (fusion::uses_context(cfg_.method)) {
    Slot hcat;
    if (frozen_unimodal) {
      std::vector<double> cat;
      for (const auto& h : h_plain) cat.insert(cat.end(), h.begin(), h.end());
      hcat = tape.constant(cat);
    } else {
      hcat = tape.concat(h_slots);
    }
    const Slot z = aggregator_->forward_tape(tape, hcat);
    const Slot flat = hypernet_->forward_tape(tape, z);
    rows = cond::weight_rows_tape(tape, flat, layout_);
  } else {
    rows = b.static_rows;
  }

  // circuit leaf inputs from the unimodal predictions
  std::vector<Slot> leaf_inputs(M);
  for (int m = 0; m < M; ++m)
    leaf_inputs[m] = nn::to_leaf_inputs_tape(tape, g.probs[m]);

  if (!fusion::uses_weighted_mean(cfg_.method)) {
    const Slot joint =
        circuit_joint_tape(tape, b, rows, leaf_inputs, pc::MarginalMask::none());
    g.fused_loss = tape.cross_entropy_logits(joint, inst.label);
    g.fused_scores = joint;
    return g;
  }

  // CWM/C2WM: credibility-weighted mean of the unimodal predictions, with
  // gradients flowing through the KL terms and the masked posteriors.
  const Slot full = tape.softmax(
      circuit_joint_tape(tape, b, rows, leaf_inputs, pc::MarginalMask::none()));
  std::vector<Slot> kls(M);
  for (int m = 0; m < M; ++m) {
    const Slot marg = tape.softmax(circuit_joint_tape(
        tape, b, rows, leaf_inputs, pc::MarginalMask::modality(m)));
    kls[m] = kl_divergence_tape(tape, full, marg);
  }
  const Slot csic = tape.stack(kls);
  const Slot total = tape.sum(csic);
  Slot fusedq;
  if (tape.scalar(total) == 0.0) {
    // all modalities uninformative: plain average (constant weights)
    fusedq = tape.zeros(K);
    for (int m = 0; m < M; ++m)
      fusedq = tape.add(fusedq, tape.scale(g.probs[m], 1.0 / M));
  } else {
    const Slot rel = tape.div_scalar(csic, total);
    fusedq = tape.zeros(K);
    for (int m = 0; m < M; ++m)
      fusedq = tape.add(fusedq, tape.mul_scalar(g.probs[m], tape.pick(rel, m)));
  }
  g.fused_loss =
      tape.neg(tape.log(tape.clamp(tape.pick(fusedq, inst.label), 1e-12, 1.0)));
  g.fused_scores = fusedq;
  return g;
}

}  // namespace c2mf
