#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "c2mf/circuit.hpp"
#include "c2mf/kern/kernels.hpp"

namespace c2mf::pc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;
constexpr double kLogStdClamp = 7.0;

double clamped_log_std(double ls) {
  return ls < -kLogStdClamp ? -kLogStdClamp : (ls > kLogStdClamp ? kLogStdClamp : ls);
}

double gaussian_logpdf(double x, double mean, double log_std) {
  const double ls = clamped_log_std(log_std);
  const double t = (x - mean) * std::exp(-ls);
  return -0.5 * t * t - ls - kHalfLog2Pi;
}

// Discretized-leaf mode: log of the renormalized density mass at x.
double gaussian_grid_logmass(double x, double mean, double log_std,
                             const std::vector<double>& grid) {
  std::vector<double> lp(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j)
    lp[j] = gaussian_logpdf(grid[j], mean, log_std);
  const double z = kern::log_sum_exp(lp.data(), lp.size());
  return gaussian_logpdf(x, mean, log_std) - z;
}

double gaussian_leaf_value(const Circuit& c, const LeafParamsView& leaf,
                           const CircuitNode& nd, const Evidence& ev,
                           const EvalOptions& opt) {
  const int m = nd.var.modality;
  if (m >= static_cast<int>(ev.modality.size()) ||
      static_cast<int>(ev.modality[m].size()) != c.leaf_dims[m])
    throw std::invalid_argument("evidence dims do not match leaf_dims");
  const double x = ev.modality[m][nd.var.dim];
  const double mean = leaf.gauss_mean[nd.param_index];
  const double log_std = leaf.gauss_log_std[nd.param_index];
  if (opt.gaussian_grid)
    return gaussian_grid_logmass(x, mean, log_std, *opt.gaussian_grid);
  return gaussian_logpdf(x, mean, log_std);
}

void categorical_log_probs(const LeafParamsView& leaf, int row, int K, double* out) {
  const double* logits = leaf.cat_logits.data() + static_cast<std::size_t>(row) * K;
  const double lse = kern::log_sum_exp(logits, K);
  kern::vadds(logits, -lse, out, K);
}

void check_ready(const Circuit& c, const WeightAssignment& w, const MarginalMask& mask) {
  if (!c.prepared)
    throw std::invalid_argument("circuit must pass validate() before evaluation");
  if (static_cast<int>(w.log_rows.size()) != c.num_weight_slots)
    throw std::invalid_argument("weight assignment row count mismatch");
  for (int s = 0; s < c.num_weight_slots; ++s)
    if (static_cast<int>(w.log_rows[s].size()) != c.weight_arity[s])
      throw std::invalid_argument("weight row arity mismatch at slot " + std::to_string(s));
  for (int m : mask.marginalized_modalities)
    if (m < 0 || m >= c.num_modalities)
      throw std::invalid_argument("mask marginalizes unknown modality");
}

ScopeSet mask_bits(const Circuit& c, const MarginalMask& mask) {
  ScopeSet bits;
  bits.resize(c.total_vars());
  for (int m : mask.marginalized_modalities)
    for (int d = 0; d < c.leaf_dims[m]; ++d)
      bits.set(c.var_index(VariableId::modality_dim(m, d)));
  if (mask.target_marginalized) bits.set(c.var_index(VariableId::target()));
  return bits;
}

}  // namespace

double log_evaluate(const Circuit& c, const LeafParamsView& leaf,
                    const WeightAssignment& w, const Evidence& ev,
                    const MarginalMask& mask, const EvalOptions& opt) {
  check_ready(c, w, mask);
  const ScopeSet masked = mask_bits(c, mask);
  if (!mask.target_marginalized && !ev.target_class)
    throw std::invalid_argument("target not marginalized but no target evidence");
  if (ev.target_class && (*ev.target_class < 0 || *ev.target_class >= c.num_classes))
    throw std::invalid_argument("target evidence class out of range");

  const int n = static_cast<int>(c.nodes.size());
  std::vector<double> val(n, 0.0);
  std::vector<double> buf;
  std::vector<double> catbuf(c.num_classes);

  for (int i = 0; i < n; ++i) {
    const CircuitNode& nd = c.nodes[i];
    if (c.scope[i].is_subset_of(masked)) {
      val[i] = 0.0;  // fully marginalized sub-circuit integrates to 1
      continue;
    }
    switch (nd.kind) {
      case NodeKind::gaussian_leaf:
        val[i] = gaussian_leaf_value(c, leaf, nd, ev, opt);
        break;
      case NodeKind::categorical_leaf:
        categorical_log_probs(leaf, nd.param_index, c.num_classes, catbuf.data());
        val[i] = catbuf[*ev.target_class];
        break;
      case NodeKind::product: {
        double acc = 0.0;
        for (std::int32_t ch : nd.children) acc += val[ch];
        val[i] = acc;
        break;
      }
      case NodeKind::sum: {
        const auto& logw = w.log_rows[nd.weight_slot];
        buf.resize(nd.children.size());
        for (std::size_t j = 0; j < nd.children.size(); ++j)
          buf[j] = logw[j] + val[nd.children[j]];
        val[i] = kern::log_sum_exp(buf.data(), buf.size());
        break;
      }
    }
  }
  return val[c.root];
}

double log_evaluate(const Circuit& c, const WeightAssignment& w,
                    const Evidence& ev, const MarginalMask& mask,
                    const EvalOptions& opt) {
  return log_evaluate(c, LeafParamsView(c.leaf), w, ev, mask, opt);
}

std::vector<double> log_joint_per_class(const Circuit& c,
                                        const LeafParamsView& leaf,
                                        const WeightAssignment& w,
                                        const Evidence& ev,
                                        const MarginalMask& mask,
                                        const EvalOptions& opt) {
  check_ready(c, w, mask);
  if (mask.target_marginalized)
    throw std::invalid_argument("per-class joint with marginalized target");
  const ScopeSet masked = mask_bits(c, mask);
  const int K = c.num_classes;
  const int n = static_cast<int>(c.nodes.size());
  const int target_var = c.var_index(VariableId::target());

  // width per node: K lanes when the (unmasked) target is in scope, else 1
  std::vector<int> width(n), off(n);
  int total = 0;
  for (int i = 0; i < n; ++i) {
    const bool lanes =
        c.scope[i].test(target_var) && !c.scope[i].is_subset_of(masked);
    width[i] = lanes ? K : 1;
    off[i] = total;
    total += width[i];
  }
  std::vector<double> arena(total, 0.0);
  std::vector<double> row(K), acc(K);

  for (int i = 0; i < n; ++i) {
    const CircuitNode& nd = c.nodes[i];
    double* out = arena.data() + off[i];
    if (c.scope[i].is_subset_of(masked)) {
      out[0] = 0.0;
      continue;
    }
    switch (nd.kind) {
      case NodeKind::gaussian_leaf:
        out[0] = gaussian_leaf_value(c, leaf, nd, ev, opt);
        break;
      case NodeKind::categorical_leaf:
        categorical_log_probs(leaf, nd.param_index, K, out);
        break;
      case NodeKind::product: {
        // accumulate in child order so each lane matches the scalar pass
        const int wv = width[i];
        std::fill(out, out + wv, 0.0);
        for (std::int32_t ch : nd.children) {
          if (width[ch] == wv)
            kern::vadd(out, arena.data() + off[ch], out, wv);
          else
            kern::vadds(out, arena[off[ch]], out, wv);
        }
        break;
      }
      case NodeKind::sum: {
        const auto& logw = w.log_rows[nd.weight_slot];
        const int wv = width[i];
        std::fill(out, out + wv, kNegInf);
        for (std::size_t j = 0; j < nd.children.size(); ++j) {
          kern::vadds(arena.data() + off[nd.children[j]], logw[j], row.data(), wv);
          kern::vmax(out, row.data(), out, wv);
        }
        std::fill(acc.begin(), acc.begin() + wv, 0.0);
        for (int k = 0; k < wv; ++k)
          if (out[k] == kNegInf) out[k] = -std::numeric_limits<double>::max();
        for (std::size_t j = 0; j < nd.children.size(); ++j) {
          kern::vadds(arena.data() + off[nd.children[j]], logw[j], row.data(), wv);
          kern::vsub(row.data(), out, row.data(), wv);
          kern::vexp(row.data(), row.data(), wv);
          kern::vadd(acc.data(), row.data(), acc.data(), wv);
        }
        kern::vlog(acc.data(), acc.data(), wv);
        kern::vadd(out, acc.data(), out, wv);
        break;
      }
    }
  }

  const double* rootv = arena.data() + off[c.root];
  if (width[c.root] != K)
    throw std::logic_error("root does not cover the target variable");
  return std::vector<double>(rootv, rootv + K);
}

std::vector<double> posterior_over_target(const Circuit& c,
                                          const LeafParamsView& leaf,
                                          const WeightAssignment& w,
                                          const Evidence& ev,
                                          const MarginalMask& mask,
                                          const EvalOptions& opt) {
  const std::vector<double> joint = log_joint_per_class(c, leaf, w, ev, mask, opt);
  const int K = c.num_classes;
  std::vector<double> p(K);
  const double m = kern::reduce_max(joint.data(), K);
  if (m == kNegInf) {  // zero-probability evidence everywhere: fall back flat
    std::fill(p.begin(), p.end(), 1.0 / K);
    return p;
  }
  kern::vadds(joint.data(), -m, p.data(), K);
  kern::vexp(p.data(), p.data(), K);
  const double z = kern::reduce_sum(p.data(), K);
  kern::vscale(p.data(), 1.0 / z, p.data(), K);
  return p;
}

std::vector<double> posterior_over_target(const Circuit& c,
                                          const WeightAssignment& w,
                                          const Evidence& ev,
                                          const MarginalMask& mask,
                                          const EvalOptions& opt) {
  return posterior_over_target(c, LeafParamsView(c.leaf), w, ev, mask, opt);
}

}  // namespace c2mf::pc
