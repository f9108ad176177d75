#include "c2mf/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "c2mf/kern/kernels.hpp"

namespace c2mf::pc {

void ScopeSet::or_with(const ScopeSet& o) {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
}

bool ScopeSet::intersects(const ScopeSet& o) const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] & o.words_[i]) return true;
  return false;
}

bool ScopeSet::is_subset_of(const ScopeSet& o) const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] & ~o.words_[i]) return false;
  return true;
}

int Circuit::total_vars() const {
  int n = 1;  // target
  for (int d : leaf_dims) n += d;
  return n;
}

int Circuit::var_index(VariableId v) const {
  if (v.is_target()) return total_vars() - 1;
  return var_offset[v.modality] + v.dim;
}

std::vector<double> WeightAssignment::row_probs(int slot) const {
  const auto& row = log_rows[slot];
  std::vector<double> p(row.size());
  kern::vexp(row.data(), p.data(), row.size());
  return p;
}

WeightAssignment weights_from_logits(const std::vector<std::vector<double>>& logit_rows) {
  WeightAssignment w;
  w.log_rows.reserve(logit_rows.size());
  for (const auto& row : logit_rows) {
    std::vector<double> lr(row.size());
    const double lse = kern::log_sum_exp(row.data(), row.size());
    kern::vadds(row.data(), -lse, lr.data(), row.size());
    w.log_rows.push_back(std::move(lr));
  }
  return w;
}

bool MarginalMask::marginalizes(int modality) const {
  return std::find(marginalized_modalities.begin(), marginalized_modalities.end(),
                   modality) != marginalized_modalities.end();
}

MarginalMask MarginalMask::all(int num_modalities) {
  MarginalMask m;
  m.target_marginalized = true;
  m.marginalized_modalities.resize(num_modalities);
  for (int i = 0; i < num_modalities; ++i) m.marginalized_modalities[i] = i;
  return m;
}

std::string ValidationReport::to_string() const {
  if (ok()) return "ok";
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i];
  }
  return os.str();
}

ValidationReport validate(Circuit& c) {
  ValidationReport rep;
  auto fail = [&rep](const std::string& msg) { rep.violations.push_back(msg); };

  c.prepared = false;
  if (c.nodes.empty()) {
    fail("circuit has no nodes");
    return rep;
  }
  if (c.num_classes < 1) fail("num_classes must be >= 1");
  if (static_cast<int>(c.leaf_dims.size()) != c.num_modalities)
    fail("leaf_dims size does not match num_modalities");
  if (c.root < 0 || c.root >= static_cast<int>(c.nodes.size()))
    fail("root index out of range");
  if (!rep.ok()) return rep;

  c.var_offset.assign(c.num_modalities, 0);
  int off = 0;
  for (int m = 0; m < c.num_modalities; ++m) {
    c.var_offset[m] = off;
    off += c.leaf_dims[m];
  }
  const int nvars = c.total_vars();
  const int n = static_cast<int>(c.nodes.size());

  // per-node structural checks + scope computation (children-before-parent
  // order doubles as the acyclicity check)
  c.scope.assign(n, {});
  int max_slot = -1;
  std::vector<int> slot_arity;
  for (int i = 0; i < n; ++i) {
    const CircuitNode& nd = c.nodes[i];
    c.scope[i].resize(nvars);
    switch (nd.kind) {
      case NodeKind::gaussian_leaf: {
        if (nd.var.is_target()) {
          fail("gaussian leaf over target at node " + std::to_string(i));
          break;
        }
        if (nd.var.modality < 0 || nd.var.modality >= c.num_modalities ||
            nd.var.dim < 0 || nd.var.dim >= c.leaf_dims[nd.var.modality]) {
          fail("leaf variable out of range at node " + std::to_string(i));
          break;
        }
        if (nd.param_index < 0 ||
            nd.param_index >= static_cast<int>(c.leaf.gauss_mean.size()) ||
            c.leaf.gauss_mean.size() != c.leaf.gauss_log_std.size()) {
          fail("gaussian param_index out of range at node " + std::to_string(i));
          break;
        }
        if (!std::isfinite(c.leaf.gauss_log_std[nd.param_index]))
          fail("non-finite log_std at node " + std::to_string(i));
        c.scope[i].set(c.var_index(nd.var));
        break;
      }
      case NodeKind::categorical_leaf: {
        if (!nd.var.is_target()) {
          fail("categorical leaf must be over target at node " + std::to_string(i));
          break;
        }
        const std::size_t need =
            (static_cast<std::size_t>(nd.param_index) + 1) * c.num_classes;
        if (nd.param_index < 0 || c.leaf.cat_logits.size() < need) {
          fail("categorical param_index out of range at node " + std::to_string(i));
          break;
        }
        c.scope[i].set(c.var_index(VariableId::target()));
        break;
      }
      case NodeKind::product:
      case NodeKind::sum: {
        if (nd.children.empty()) {
          fail((nd.kind == NodeKind::sum ? std::string("sum") : std::string("product")) +
               " node without children at node " + std::to_string(i));
          break;
        }
        bool child_ok = true;
        for (std::int32_t ch : nd.children) {
          if (ch < 0 || ch >= i) {  // forward references break topo order
            fail("child " + std::to_string(ch) + " of node " + std::to_string(i) +
                 " violates topological order");
            child_ok = false;
          }
        }
        if (!child_ok) break;
        if (nd.kind == NodeKind::sum) {
          if (nd.weight_slot < 0) {
            fail("sum node without weight_slot at node " + std::to_string(i));
            break;
          }
          max_slot = std::max(max_slot, nd.weight_slot);
          if (static_cast<int>(slot_arity.size()) <= nd.weight_slot)
            slot_arity.resize(nd.weight_slot + 1, -1);
          if (slot_arity[nd.weight_slot] != -1)
            fail("weight_slot " + std::to_string(nd.weight_slot) +
                 " reused at node " + std::to_string(i));
          slot_arity[nd.weight_slot] = static_cast<int>(nd.children.size());
          // smoothness: identical child scopes
          for (std::int32_t ch : nd.children) {
            if (!(c.scope[ch] == c.scope[nd.children[0]])) {
              fail("non-smooth sum at node " + std::to_string(i));
              break;
            }
          }
        } else {
          // decomposability: pairwise-disjoint child scopes
          ScopeSet acc;
          acc.resize(nvars);
          for (std::int32_t ch : nd.children) {
            if (acc.intersects(c.scope[ch])) {
              fail("non-decomposable product at node " + std::to_string(i));
              break;
            }
            acc.or_with(c.scope[ch]);
          }
        }
        for (std::int32_t ch : nd.children) c.scope[i].or_with(c.scope[ch]);
        break;
      }
    }
  }

  // weight slots must be dense 0..max
  for (int s = 0; s <= max_slot; ++s)
    if (s >= static_cast<int>(slot_arity.size()) || slot_arity[s] == -1)
      fail("weight_slot " + std::to_string(s) + " has no sum node");

  // root must cover everything
  if (rep.ok()) {
    ScopeSet full;
    full.resize(nvars);
    for (int v = 0; v < nvars; ++v) full.set(v);
    if (!(c.scope[c.root] == full))
      fail("root scope does not cover all variables");
  }

  if (rep.ok()) {
    c.num_weight_slots = max_slot + 1;
    c.weight_arity = std::move(slot_arity);
    c.prepared = true;
  }
  return rep;
}

}  // namespace c2mf::pc
