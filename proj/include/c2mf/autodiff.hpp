#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Reverse-mode autodiff over a flat tape of vector-valued slots. The primitive
// set is closed and small: exactly what circuit evaluation, MLPs, softmax /
// log-sum-exp, cross-entropy and the KL credibility terms need. There is no
// general broadcasting; the only broadcast is the explicit *_scalar ops.
// Everything is double precision.

namespace c2mf::ad {

struct Parameter {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;  // same shape as value

  Parameter(std::string n, std::vector<double> v)
      : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Registry with deterministic (registration-order) iteration.
class ParamStore {
 public:
  Parameter& create(std::string name, std::vector<double> init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::size_t count() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Adam with decoupled per-parameter moment state, keyed by parameter identity.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update to the listed parameters (in list order) from the
  // accumulated gradients, then zeroes their gradients.
  void step(std::span<Parameter* const> params);
  // Convenience: every parameter in the store, in registration order.
  void step(ParamStore& params);
  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::unordered_map<const Parameter*, Moments> state_;
};

class Tape {
 public:
  using Slot = std::int32_t;
  static constexpr Slot kNoSlot = -1;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----
  Slot constant(std::span<const double> v);
  Slot constant_scalar(double v);
  Slot zeros(int n);
  // Binds a parameter; repeated calls with the same parameter return the
  // same slot for this tape.
  Slot param(Parameter& p);

  // ---- elementwise (equal sizes) ----
  Slot add(Slot a, Slot b);
  Slot sub(Slot a, Slot b);
  Slot mul(Slot a, Slot b);
  Slot div(Slot a, Slot b);
  // ---- scalar-slot broadcast ----
  Slot add_scalar(Slot v, Slot s);  // v[i] + s
  Slot mul_scalar(Slot v, Slot s);  // v[i] * s
  Slot div_scalar(Slot v, Slot s);  // v[i] / s
  // ---- constants ----
  Slot scale(Slot a, double c);
  Slot shift(Slot a, double c);
  Slot neg(Slot a) { return scale(a, -1.0); }
  // ---- unary ----
  Slot exp(Slot a);
  Slot log(Slot a);
  Slot relu(Slot a);
  Slot tanh(Slot a);
  Slot clamp(Slot a, double lo, double hi);
  // ---- reductions ----
  Slot sum(Slot a);
  Slot mean(Slot a);
  Slot dot(Slot a, Slot b);
  Slot log_sum_exp(Slot a);
  // ---- shape ----
  Slot concat(std::span<const Slot> parts);
  Slot slice(Slot a, int offset, int len);
  Slot pick(Slot a, int index);  // scalar a[index]
  Slot stack(std::span<const Slot> scalars);
  // ---- linear algebra ----
  // W is a (rows x cols) row-major slot, x has length cols; result length rows.
  Slot matvec(Slot w, int rows, int cols, Slot x);
  // ---- softmax family ----
  Slot softmax(Slot a);
  Slot log_softmax(Slot a);
  Slot cross_entropy_logits(Slot logits, int label);  // lse(logits) - logits[label]
  // ---- fused circuit ops ----
  // Univariate Gaussian log-density of x[x_index] under (means[p], log_stds[p])
  // with log_std clamped to [-7, 7] so densities stay finite.
  Slot gaussian_logpdf(Slot x, int x_index, Slot means, Slot log_stds, int p);
  // out[k] = log sum_i exp(logw[i] + children[i][k]); children share a width.
  Slot weighted_lse(std::span<const Slot> children, Slot logw);

  // ---- inspection ----
  int size(Slot s) const { return slots_[s].len; }
  std::span<const double> value(Slot s) const;  // invalidated by recording
  double scalar(Slot s) const;
  std::vector<double> value_copy(Slot s) const;

  // ---- backward ----
  // Seeds d(loss)=1 (loss must be scalar), sweeps the tape in reverse and
  // accumulates into Parameter::grad for every bound parameter.
  void backward(Slot loss);
  std::span<const double> grad(Slot s) const;  // valid after backward

  std::size_t num_records() const { return recs_.size(); }
  void reset();  // clears the recording but keeps buffer capacity

 private:
  enum class Op : std::uint8_t {
    constant, param, add, sub, mul, div, add_scalar, mul_scalar, div_scalar,
    scale, shift, exp, log, relu, tanh, clamp, sum, mean, dot, log_sum_exp,
    concat, slice, pick, stack, matvec, softmax, log_softmax,
    cross_entropy_logits, gaussian_logpdf, weighted_lse,
  };

  struct SlotInfo {
    std::uint32_t off;
    std::int32_t len;
  };
  struct Rec {
    Op op;
    Slot out, a, b;
    std::int32_t i0, i1;
    double x0, x1;
    std::int32_t ex0, ex1;  // range into extras_
  };

  Slot alloc(int len);
  Slot record(Op op, int len, Slot a = kNoSlot, Slot b = kNoSlot,
              std::int32_t i0 = 0, std::int32_t i1 = 0, double x0 = 0.0,
              double x1 = 0.0, std::span<const Slot> extras = {});
  double* vptr(Slot s) { return vals_.data() + slots_[s].off; }
  const double* vptr(Slot s) const { return vals_.data() + slots_[s].off; }
  double* gptr(Slot s) { return grads_.data() + slots_[s].off; }

  void backward_one(const Rec& r);

  std::vector<SlotInfo> slots_;
  std::vector<Rec> recs_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<Slot> extras_;
  std::vector<std::pair<Slot, Parameter*>> param_slots_;
  std::unordered_map<Parameter*, Slot> param_index_;
  std::vector<double> scratch_;
};

}  // namespace c2mf::ad
