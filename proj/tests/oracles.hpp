#pragma once

// Independent reference implementations used to pin expected test values.
// Everything here is deliberately naive (plain loops, linear-space sums,
// recursion) and stays independent of the library's evaluation paths.

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "c2mf/autodiff.hpp"
#include "c2mf/circuit.hpp"
#include "c2mf/rng.hpp"

namespace oracles {

// ---- tiny numeric helpers ----------------------------------------------------

inline std::vector<double> naive_softmax(std::span<const double> x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += out[i] = std::exp(x[i] - m);
  for (double& v : out) v /= z;
  return out;
}

inline std::vector<double> random_simplex(c2mf::Rng& rng, int k) {
  std::vector<double> p(k);
  double z = 0.0;
  for (double& v : p) z += v = -std::log(1.0 - rng.uniform01());
  for (double& v : p) v /= z;
  return p;
}

// ---- naive MLP ---------------------------------------------------------------

// weights[l] is (out x in) row-major; relu on all but the last layer.
inline std::vector<double> naive_mlp_forward(
    const std::vector<std::vector<double>>& weights,
    const std::vector<std::vector<double>>& biases,
    const std::vector<int>& widths, std::span<const double> x, bool use_tanh) {
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    std::vector<double> next(widths[l + 1], 0.0);
    for (int r = 0; r < widths[l + 1]; ++r) {
      double acc = biases[l][r];
      for (int c = 0; c < widths[l]; ++c)
        acc += weights[l][static_cast<std::size_t>(r) * widths[l] + c] * cur[c];
      next[r] = acc;
    }
    if (l + 2 < widths.size())
      for (double& v : next) v = use_tanh ? std::tanh(v) : (v > 0 ? v : 0.0);
    cur = std::move(next);
  }
  return cur;
}

// ---- discretized-circuit enumeration oracle -----------------------------------

// Assignment of every variable: grid index per modality dim, class for target.
struct GridAssignment {
  std::vector<std::vector<int>> grid_index;  // [m][dim]
  int target = 0;
};

// Naive linear-space recursive evaluation of a circuit whose Gaussian leaves
// are renormalized onto `grid`. Masked variables contribute factor 1.
inline double naive_grid_value(const c2mf::pc::Circuit& c,
                               const c2mf::pc::WeightAssignment& w,
                               const std::vector<double>& grid,
                               const GridAssignment& a,
                               const c2mf::pc::MarginalMask& mask, int node) {
  using c2mf::pc::NodeKind;
  const auto& nd = c.nodes[node];
  switch (nd.kind) {
    case NodeKind::gaussian_leaf: {
      const int m = nd.var.modality;
      bool masked = false;
      for (int mm : mask.marginalized_modalities) masked |= (mm == m);
      if (masked) return 1.0;
      const double mean = c.leaf.gauss_mean[nd.param_index];
      const double ls = std::clamp(c.leaf.gauss_log_std[nd.param_index], -7.0, 7.0);
      const double sd = std::exp(ls);
      auto dens = [&](double x) {
        const double t = (x - mean) / sd;
        return std::exp(-0.5 * t * t) / (sd * std::sqrt(2.0 * M_PI));
      };
      double z = 0.0;
      for (double g : grid) z += dens(g);
      return dens(grid[a.grid_index[m][nd.var.dim]]) / z;
    }
    case NodeKind::categorical_leaf: {
      if (mask.target_marginalized) return 1.0;
      std::vector<double> logits(c.num_classes);
      for (int k = 0; k < c.num_classes; ++k)
        logits[k] =
            c.leaf.cat_logits[static_cast<std::size_t>(nd.param_index) * c.num_classes + k];
      return naive_softmax(logits)[a.target];
    }
    case NodeKind::product: {
      double acc = 1.0;
      for (auto ch : nd.children) acc *= naive_grid_value(c, w, grid, a, mask, ch);
      return acc;
    }
    case NodeKind::sum: {
      double acc = 0.0;
      const auto probs = w.row_probs(nd.weight_slot);
      for (std::size_t j = 0; j < nd.children.size(); ++j)
        acc += probs[j] * naive_grid_value(c, w, grid, a, mask, nd.children[j]);
      return acc;
    }
  }
  return 0.0;
}

// Exhaustive enumeration of sum over all assignments of the variables in
// `enumerate_modalities` (all dims) and optionally the target, with the rest
// fixed by `base`.
inline double enumerate_marginal(const c2mf::pc::Circuit& c,
                                 const c2mf::pc::WeightAssignment& w,
                                 const std::vector<double>& grid,
                                 GridAssignment base,
                                 const std::vector<int>& enumerate_modalities,
                                 bool enumerate_target) {
  // collect (modality, dim) cells to sweep
  std::vector<std::pair<int, int>> cells;
  for (int m : enumerate_modalities)
    for (int d = 0; d < c.leaf_dims[m]; ++d) cells.emplace_back(m, d);

  const c2mf::pc::MarginalMask none{};  // fully observed evaluation
  double total = 0.0;
  const int G = static_cast<int>(grid.size());
  std::vector<int> idx(cells.size(), 0);
  while (true) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      base.grid_index[cells[i].first][cells[i].second] = idx[i];
    if (enumerate_target) {
      for (int y = 0; y < c.num_classes; ++y) {
        base.target = y;
        total += naive_grid_value(c, w, grid, base, none, c.root);
      }
    } else {
      total += naive_grid_value(c, w, grid, base, none, c.root);
    }
    // odometer
    std::size_t i = 0;
    for (; i < cells.size(); ++i) {
      if (++idx[i] < G) break;
      idx[i] = 0;
    }
    if (i == cells.size()) break;
    if (cells.empty()) break;
  }
  return total;
}

// ---- confusion-matrix metrics oracle ------------------------------------------

struct NaiveMetrics {
  double accuracy, precision, recall, f1;
};

inline NaiveMetrics naive_metrics(const std::vector<int>& pred,
                                  const std::vector<int>& label, int K) {
  std::vector<std::vector<long>> cm(K, std::vector<long>(K, 0));
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    cm[label[i]][pred[i]]++;
    if (pred[i] == label[i]) ++correct;
  }
  double ps = 0, rs = 0, fs = 0;
  for (int c = 0; c < K; ++c) {
    long tp = cm[c][c], fp = 0, fn = 0;
    for (int o = 0; o < K; ++o) {
      if (o != c) {
        fp += cm[o][c];
        fn += cm[c][o];
      }
    }
    const double p = tp + fp > 0 ? double(tp) / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? double(tp) / (tp + fn) : 0.0;
    ps += p;
    rs += r;
    fs += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return {double(correct) / pred.size(), ps / K, rs / K, fs / K};
}

// ---- finite-difference gradient checking --------------------------------------

// Max relative error between tape gradients and central differences over every
// scalar of every parameter in `params`. `build` records the loss on a fresh
// tape each call (values are read from the parameters at record time).
inline double max_grad_rel_err(std::vector<c2mf::ad::Parameter*> params,
                               const std::function<double(bool)>& run,
                               double h = 1e-6, double floor_den = 1e-3) {
  // run(true) builds + backward and returns loss; run(false) only forward.
  for (auto* p : params) p->zero_grad();
  run(true);
  double worst = 0.0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = run(false);
      p->value[i] = saved - h;
      const double dn = run(false);
      p->value[i] = saved;
      const double fd = (up - dn) / (2 * h);
      const double ad = p->grad[i];
      const double rel =
          std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor_den});
      worst = std::max(worst, rel);
    }
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

}  // namespace oracles
