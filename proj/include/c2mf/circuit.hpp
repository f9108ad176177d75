#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Probabilistic-circuit core: structure, structural validation (smoothness,
// decomposability, topological order), and exact log-space evaluation with
// marginalization masks over the variables {p_1..p_M, Y}.

namespace c2mf::pc {

// A circuit variable: dimension `dim` of modality `modality`, or the target
// class variable Y (modality == kTarget).
struct VariableId {
  static constexpr int kTarget = -1;
  int modality = kTarget;  // 0-based modality index, or kTarget
  int dim = 0;             // 0-based dim within the modality's leaf block

  bool is_target() const { return modality == kTarget; }
  static VariableId target() { return {kTarget, 0}; }
  static VariableId modality_dim(int m, int d) { return {m, d}; }
  friend bool operator==(const VariableId&, const VariableId&) = default;
};

enum class NodeKind : std::uint8_t { gaussian_leaf, categorical_leaf, product, sum };

struct CircuitNode {
  NodeKind kind;
  VariableId var{};                 // leaves only
  std::int32_t param_index = -1;    // gaussian: index into the mean/log_std
                                    // arrays; categorical: logits row index
  std::vector<std::int32_t> children;  // product / sum
  std::int32_t weight_slot = -1;       // sum only
};

// Learnable leaf parameters, stored as flat tensors so the trainer can wrap
// them directly. gauss_mean/gauss_log_std are indexed by the Gaussian leaf's
// param_index; cat_logits holds num_classes-wide rows per categorical leaf.
struct LeafParams {
  std::vector<double> gauss_mean;
  std::vector<double> gauss_log_std;
  std::vector<double> cat_logits;
};

// Read-only view used by the evaluators; lets leaf parameters live either in
// the circuit itself or in a trainer's parameter store.
struct LeafParamsView {
  std::span<const double> gauss_mean;
  std::span<const double> gauss_log_std;
  std::span<const double> cat_logits;
  LeafParamsView() = default;
  LeafParamsView(const LeafParams& p)
      : gauss_mean(p.gauss_mean), gauss_log_std(p.gauss_log_std),
        cat_logits(p.cat_logits) {}
};

// Dynamic bitset over circuit variables.
class ScopeSet {
 public:
  void resize(int nbits) { words_.assign((nbits + 63) / 64, 0); }
  void set(int i) { words_[i >> 6] |= (std::uint64_t{1} << (i & 63)); }
  bool test(int i) const { return (words_[i >> 6] >> (i & 63)) & 1; }
  void or_with(const ScopeSet& o);
  bool intersects(const ScopeSet& o) const;
  bool is_subset_of(const ScopeSet& o) const;
  friend bool operator==(const ScopeSet&, const ScopeSet&) = default;

 private:
  std::vector<std::uint64_t> words_;
};

struct Circuit {
  int num_modalities = 0;
  int num_classes = 0;
  std::vector<int> leaf_dims;          // per modality
  std::vector<CircuitNode> nodes;      // topological order expected
  std::int32_t root = -1;
  LeafParams leaf;

  // derived, filled by validate() on success
  int num_weight_slots = 0;
  std::vector<int> weight_arity;       // per weight slot
  std::vector<ScopeSet> scope;         // per node
  std::vector<int> var_offset;         // per modality, into global var index
  bool prepared = false;

  int total_vars() const;
  int var_index(VariableId v) const;   // global index; target is last
};

// Per-sum-node mixture weights, stored normalized as log-weights.
struct WeightAssignment {
  std::vector<std::vector<double>> log_rows;

  std::vector<double> row_probs(int slot) const;  // exp of a row
};

// Builds a normalized assignment from raw logit rows (log-softmax per row).
WeightAssignment weights_from_logits(const std::vector<std::vector<double>>& logit_rows);

struct MarginalMask {
  std::vector<int> marginalized_modalities;  // deduplicated by users
  bool target_marginalized = false;

  bool marginalizes(int modality) const;
  static MarginalMask none() { return {}; }
  static MarginalMask all(int num_modalities);
  static MarginalMask modality(int m) { return {{m}, false}; }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

// Structural validation. Checks topological child ordering (which implies
// acyclicity), arities, variable ranges, parameter-index ranges, the
// weight-slot bijection, smoothness, decomposability, and root-scope
// completeness. On success fills the circuit's derived fields and marks it
// prepared. Violations are data, not exceptions.
ValidationReport validate(Circuit& c);

struct Evidence {
  std::vector<std::vector<double>> modality;  // per modality; ignored if masked
  std::optional<int> target_class;
};

// Optional evaluation settings. When `gaussian_grid` is set, every Gaussian
// leaf is treated as a discrete distribution over the grid points with masses
// proportional to its density there (renormalized). Evidence values must then
// be grid points. This is the discretized mode the enumeration oracles use.
struct EvalOptions {
  const std::vector<double>* gaussian_grid = nullptr;
};

// log P(evidence under mask). Masked leaves contribute log 1 = 0; fully
// marginalized sub-circuits short-circuit to exactly 0. Returns -inf rather
// than failing when the evidence has probability zero.
double log_evaluate(const Circuit& c, const LeafParamsView& leaf,
                    const WeightAssignment& w, const Evidence& ev,
                    const MarginalMask& mask, const EvalOptions& opt = {});
double log_evaluate(const Circuit& c, const WeightAssignment& w,
                    const Evidence& ev, const MarginalMask& mask,
                    const EvalOptions& opt = {});

// log P(Y = k, evidence under mask) for every k, computed in one bottom-up
// pass; lane k is bitwise identical to log_evaluate with target_class = k.
std::vector<double> log_joint_per_class(const Circuit& c,
                                        const LeafParamsView& leaf,
                                        const WeightAssignment& w,
                                        const Evidence& ev,
                                        const MarginalMask& mask,
                                        const EvalOptions& opt = {});

// Softmax-normalized posterior over the target from the per-class joints.
// mask.target_marginalized must be false.
std::vector<double> posterior_over_target(const Circuit& c,
                                          const LeafParamsView& leaf,
                                          const WeightAssignment& w,
                                          const Evidence& ev,
                                          const MarginalMask& mask,
                                          const EvalOptions& opt = {});
std::vector<double> posterior_over_target(const Circuit& c,
                                          const WeightAssignment& w,
                                          const Evidence& ev,
                                          const MarginalMask& mask,
                                          const EvalOptions& opt = {});

// RAT-SPN-style random tensorized construction. The top partition is
// modality-major: every top product has one child per modality block plus a
// categorical child over Y; `depth` controls the random binary splits inside
// each modality block. Throws std::invalid_argument when a requested depth
// cannot split some block (leaf_dims[m] < 2^depth) or a count is < 1.
Circuit build_random_tensorized(int num_modalities, int num_classes,
                                const std::vector<int>& leaf_dims, int depth,
                                int num_sums, int num_repetitions,
                                std::uint64_t seed);

}  // namespace c2mf::pc
