#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2mf/circuit.hpp"
#include "c2mf/rng.hpp"

namespace c2mf::pc {

namespace {

struct Builder {
  Circuit c;
  Rng rng;
  int num_sums;

  explicit Builder(std::uint64_t seed) : rng(seed), num_sums(0) {}

  std::int32_t add_gaussian(int modality, int dim) {
    CircuitNode nd;
    nd.kind = NodeKind::gaussian_leaf;
    nd.var = VariableId::modality_dim(modality, dim);
    nd.param_index = static_cast<std::int32_t>(c.leaf.gauss_mean.size());
    c.leaf.gauss_mean.push_back(rng.normal());
    c.leaf.gauss_log_std.push_back(0.0);
    c.nodes.push_back(std::move(nd));
    return static_cast<std::int32_t>(c.nodes.size() - 1);
  }

  std::int32_t add_categorical() {
    CircuitNode nd;
    nd.kind = NodeKind::categorical_leaf;
    nd.var = VariableId::target();
    nd.param_index =
        static_cast<std::int32_t>(c.leaf.cat_logits.size() / c.num_classes);
    c.leaf.cat_logits.insert(c.leaf.cat_logits.end(), c.num_classes, 0.0);
    c.nodes.push_back(std::move(nd));
    return static_cast<std::int32_t>(c.nodes.size() - 1);
  }

  std::int32_t add_product(std::vector<std::int32_t> children) {
    CircuitNode nd;
    nd.kind = NodeKind::product;
    nd.children = std::move(children);
    c.nodes.push_back(std::move(nd));
    return static_cast<std::int32_t>(c.nodes.size() - 1);
  }

  std::int32_t add_sum(std::vector<std::int32_t> children) {
    CircuitNode nd;
    nd.kind = NodeKind::sum;
    nd.children = std::move(children);
    nd.weight_slot = c.num_weight_slots++;
    c.nodes.push_back(std::move(nd));
    return static_cast<std::int32_t>(c.nodes.size() - 1);
  }

  // Region over `dims` of one modality block; returns num_sums alternatives.
  std::vector<std::int32_t> build_region(int modality, std::vector<int> dims,
                                         int depth) {
    std::vector<std::int32_t> out;
    if (depth == 0) {
      // leaf region: factorized fresh univariate leaves per alternative
      for (int s = 0; s < num_sums; ++s) {
        if (dims.size() == 1) {
          out.push_back(add_gaussian(modality, dims[0]));
        } else {
          std::vector<std::int32_t> factors;
          factors.reserve(dims.size());
          for (int d : dims) factors.push_back(add_gaussian(modality, d));
          out.push_back(add_product(std::move(factors)));
        }
      }
      return out;
    }
    if (dims.size() < 2)
      throw std::invalid_argument("depth exceeds what the variable partition permits");
    // random balanced split
    for (std::size_t i = dims.size() - 1; i > 0; --i)
      std::swap(dims[i], dims[rng.index(static_cast<int>(i) + 1)]);
    const std::size_t half = dims.size() / 2;
    std::vector<int> left(dims.begin(), dims.begin() + half);
    std::vector<int> right(dims.begin() + half, dims.end());
    std::sort(left.begin(), left.end());
    std::sort(right.begin(), right.end());
    const auto ln = build_region(modality, std::move(left), depth - 1);
    const auto rn = build_region(modality, std::move(right), depth - 1);
    std::vector<std::int32_t> products;
    products.reserve(ln.size() * rn.size());
    for (std::int32_t a : ln)
      for (std::int32_t b : rn) products.push_back(add_product({a, b}));
    for (int s = 0; s < num_sums; ++s) out.push_back(add_sum(products));
    return out;
  }
};

}  // namespace

Circuit build_random_tensorized(int num_modalities, int num_classes,
                                const std::vector<int>& leaf_dims, int depth,
                                int num_sums, int num_repetitions,
                                std::uint64_t seed) {
  if (num_modalities < 1 || num_classes < 1 || num_sums < 1 || num_repetitions < 1)
    throw std::invalid_argument("build_random_tensorized: counts must be >= 1");
  if (static_cast<int>(leaf_dims.size()) != num_modalities)
    throw std::invalid_argument("leaf_dims size must equal num_modalities");
  if (depth < 0) throw std::invalid_argument("depth must be >= 0");
  for (int m = 0; m < num_modalities; ++m) {
    if (leaf_dims[m] < 1)
      throw std::invalid_argument("leaf_dims entries must be >= 1");
    if (leaf_dims[m] < (1 << depth))
      throw std::invalid_argument(
          "depth exceeds what the variable partition permits: modality " +
          std::to_string(m) + " has " + std::to_string(leaf_dims[m]) +
          " dims, depth " + std::to_string(depth) + " needs " +
          std::to_string(1 << depth));
  }

  Builder b(seed);
  b.c.num_modalities = num_modalities;
  b.c.num_classes = num_classes;
  b.c.leaf_dims = leaf_dims;
  b.num_sums = num_sums;

  // modality-major top partition: each top product pairs one alternative per
  // modality block with one categorical leaf over Y
  std::vector<std::int32_t> top_products;
  for (int rep = 0; rep < num_repetitions; ++rep) {
    std::vector<std::vector<std::int32_t>> parts;
    parts.reserve(num_modalities + 1);
    for (int m = 0; m < num_modalities; ++m) {
      std::vector<int> dims(leaf_dims[m]);
      for (int d = 0; d < leaf_dims[m]; ++d) dims[d] = d;
      parts.push_back(b.build_region(m, std::move(dims), depth));
    }
    std::vector<std::int32_t> y_leaves;
    for (int s = 0; s < num_sums; ++s) y_leaves.push_back(b.add_categorical());
    parts.push_back(std::move(y_leaves));

    // cross product over part alternatives
    std::vector<std::vector<std::int32_t>> combos{{}};
    for (const auto& part : parts) {
      std::vector<std::vector<std::int32_t>> next;
      next.reserve(combos.size() * part.size());
      for (const auto& prefix : combos)
        for (std::int32_t nd : part) {
          auto ext = prefix;
          ext.push_back(nd);
          next.push_back(std::move(ext));
        }
      combos = std::move(next);
    }
    for (auto& combo : combos) top_products.push_back(b.add_product(std::move(combo)));
  }
  b.c.root = b.add_sum(std::move(top_products));

  Circuit circuit = std::move(b.c);
  ValidationReport rep = validate(circuit);
  if (!rep.ok())
    throw std::logic_error("built circuit failed validation: " + rep.to_string());
  return circuit;
}

}  // namespace c2mf::pc
