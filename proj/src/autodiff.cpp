#include "c2mf/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "c2mf/kern/kernels.hpp"

namespace c2mf::ad {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;
constexpr double kLogStdClamp = 7.0;
}  // namespace

// ---- ParamStore -------------------------------------------------------------

Parameter& ParamStore::create(std::string name, std::vector<double> init) {
  if (index_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>(name, std::move(init));
  Parameter& ref = *p;
  index_.emplace(ref.name, params_.size());
  params_.push_back(std::move(p));
  return ref;
}

Parameter* ParamStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// ---- Adam -------------------------------------------------------------------

void Adam::step(ParamStore& params) {
  std::vector<Parameter*> all;
  all.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i) all.push_back(&params.at(i));
  step(all);
}

void Adam::step(std::span<Parameter* const> params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* pp : params) {
    Parameter& p = *pp;
    Moments& mm = state_[&p];
    if (mm.m.size() != p.size()) {
      mm.m.assign(p.size(), 0.0);
      mm.v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      mm.m[i] = cfg_.beta1 * mm.m[i] + (1.0 - cfg_.beta1) * g;
      mm.v[i] = cfg_.beta2 * mm.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = mm.m[i] / bc1;
      const double vhat = mm.v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

// ---- Tape: recording --------------------------------------------------------

Tape::Slot Tape::alloc(int len) {
  SlotInfo info{static_cast<std::uint32_t>(vals_.size()), len};
  vals_.resize(vals_.size() + static_cast<std::size_t>(len), 0.0);
  slots_.push_back(info);
  return static_cast<Slot>(slots_.size() - 1);
}

Tape::Slot Tape::record(Op op, int len, Slot a, Slot b, std::int32_t i0,
                        std::int32_t i1, double x0, double x1,
                        std::span<const Slot> extras) {
  Slot out = alloc(len);
  Rec r;
  r.op = op;
  r.out = out;
  r.a = a;
  r.b = b;
  r.i0 = i0;
  r.i1 = i1;
  r.x0 = x0;
  r.x1 = x1;
  r.ex0 = static_cast<std::int32_t>(extras_.size());
  extras_.insert(extras_.end(), extras.begin(), extras.end());
  r.ex1 = static_cast<std::int32_t>(extras_.size());
  recs_.push_back(r);
  return out;
}

Tape::Slot Tape::constant(std::span<const double> v) {
  Slot s = record(Op::constant, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), vptr(s));
  return s;
}

Tape::Slot Tape::constant_scalar(double v) { return constant(std::span<const double>(&v, 1)); }

Tape::Slot Tape::zeros(int n) { return record(Op::constant, n); }

Tape::Slot Tape::param(Parameter& p) {
  auto it = param_index_.find(&p);
  if (it != param_index_.end()) return it->second;
  Slot s = record(Op::param, static_cast<int>(p.size()));
  std::copy(p.value.begin(), p.value.end(), vptr(s));
  param_slots_.emplace_back(s, &p);
  param_index_.emplace(&p, s);
  return s;
}

#define C2MF_CHECK_SAME(a, b)                                         \
  if (slots_[a].len != slots_[b].len)                                 \
  throw std::invalid_argument("tape op: size mismatch")

Tape::Slot Tape::add(Slot a, Slot b) {
  C2MF_CHECK_SAME(a, b);
  Slot s = record(Op::add, slots_[a].len, a, b);
  kern::vadd(vptr(a), vptr(b), vptr(s), slots_[s].len);
  return s;
}

Tape::Slot Tape::sub(Slot a, Slot b) {
  C2MF_CHECK_SAME(a, b);
  Slot s = record(Op::sub, slots_[a].len, a, b);
  kern::vsub(vptr(a), vptr(b), vptr(s), slots_[s].len);
  return s;
}

Tape::Slot Tape::mul(Slot a, Slot b) {
  C2MF_CHECK_SAME(a, b);
  Slot s = record(Op::mul, slots_[a].len, a, b);
  kern::vmul(vptr(a), vptr(b), vptr(s), slots_[s].len);
  return s;
}

Tape::Slot Tape::div(Slot a, Slot b) {
  C2MF_CHECK_SAME(a, b);
  Slot s = record(Op::div, slots_[a].len, a, b);
  const double* pa = vptr(a);
  const double* pb = vptr(b);
  double* po = vptr(s);
  for (int i = 0; i < slots_[s].len; ++i) po[i] = pa[i] / pb[i];
  return s;
}

Tape::Slot Tape::add_scalar(Slot v, Slot s) {
  assert(slots_[s].len == 1);
  Slot o = record(Op::add_scalar, slots_[v].len, v, s);
  kern::vadds(vptr(v), *vptr(s), vptr(o), slots_[o].len);
  return o;
}

Tape::Slot Tape::mul_scalar(Slot v, Slot s) {
  assert(slots_[s].len == 1);
  Slot o = record(Op::mul_scalar, slots_[v].len, v, s);
  kern::vscale(vptr(v), *vptr(s), vptr(o), slots_[o].len);
  return o;
}

Tape::Slot Tape::div_scalar(Slot v, Slot s) {
  assert(slots_[s].len == 1);
  Slot o = record(Op::div_scalar, slots_[v].len, v, s);
  const double sv = *vptr(s);
  const double* pv = vptr(v);
  double* po = vptr(o);
  for (int i = 0; i < slots_[o].len; ++i) po[i] = pv[i] / sv;
  return o;
}

Tape::Slot Tape::scale(Slot a, double c) {
  Slot s = record(Op::scale, slots_[a].len, a, kNoSlot, 0, 0, c);
  kern::vscale(vptr(a), c, vptr(s), slots_[s].len);
  return s;
}

Tape::Slot Tape::shift(Slot a, double c) {
  Slot s = record(Op::shift, slots_[a].len, a, kNoSlot, 0, 0, c);
  kern::vadds(vptr(a), c, vptr(s), slots_[s].len);
  return s;
}

Tape::Slot Tape::exp(Slot a) {
  Slot s = record(Op::exp, slots_[a].len, a);
  kern::vexp(vptr(a), vptr(s), slots_[s].len);
  return s;
}

Tape::Slot Tape::log(Slot a) {
  Slot s = record(Op::log, slots_[a].len, a);
  kern::vlog(vptr(a), vptr(s), slots_[s].len);
  return s;
}

Tape::Slot Tape::relu(Slot a) {
  Slot s = record(Op::relu, slots_[a].len, a);
  const double* pa = vptr(a);
  double* po = vptr(s);
  for (int i = 0; i < slots_[s].len; ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  return s;
}

Tape::Slot Tape::tanh(Slot a) {
  Slot s = record(Op::tanh, slots_[a].len, a);
  const double* pa = vptr(a);
  double* po = vptr(s);
  for (int i = 0; i < slots_[s].len; ++i) po[i] = std::tanh(pa[i]);
  return s;
}

Tape::Slot Tape::clamp(Slot a, double lo, double hi) {
  Slot s = record(Op::clamp, slots_[a].len, a, kNoSlot, 0, 0, lo, hi);
  const double* pa = vptr(a);
  double* po = vptr(s);
  for (int i = 0; i < slots_[s].len; ++i)
    po[i] = pa[i] < lo ? lo : (pa[i] > hi ? hi : pa[i]);
  return s;
}

Tape::Slot Tape::sum(Slot a) {
  Slot s = record(Op::sum, 1, a);
  *vptr(s) = kern::reduce_sum(vptr(a), slots_[a].len);
  return s;
}

Tape::Slot Tape::mean(Slot a) {
  if (slots_[a].len == 0) throw std::invalid_argument("mean of empty slot");
  Slot s = record(Op::mean, 1, a);
  *vptr(s) = kern::reduce_sum(vptr(a), slots_[a].len) / slots_[a].len;
  return s;
}

Tape::Slot Tape::dot(Slot a, Slot b) {
  C2MF_CHECK_SAME(a, b);
  Slot s = record(Op::dot, 1, a, b);
  *vptr(s) = kern::dot(vptr(a), vptr(b), slots_[a].len);
  return s;
}

Tape::Slot Tape::log_sum_exp(Slot a) {
  Slot s = record(Op::log_sum_exp, 1, a);
  *vptr(s) = kern::log_sum_exp(vptr(a), slots_[a].len);
  return s;
}

Tape::Slot Tape::concat(std::span<const Slot> parts) {
  int total = 0;
  for (Slot p : parts) total += slots_[p].len;
  Slot s = record(Op::concat, total, kNoSlot, kNoSlot, 0, 0, 0.0, 0.0, parts);
  double* po = vptr(s);
  for (Slot p : parts) {
    std::memcpy(po, vptr(p), sizeof(double) * slots_[p].len);
    po += slots_[p].len;
  }
  return s;
}

Tape::Slot Tape::slice(Slot a, int offset, int len) {
  if (offset < 0 || len < 0 || offset + len > slots_[a].len)
    throw std::invalid_argument("tape slice out of range");
  Slot s = record(Op::slice, len, a, kNoSlot, offset);
  std::memcpy(vptr(s), vptr(a) + offset, sizeof(double) * len);
  return s;
}

Tape::Slot Tape::pick(Slot a, int index) {
  if (index < 0 || index >= slots_[a].len)
    throw std::invalid_argument("tape pick out of range");
  Slot s = record(Op::pick, 1, a, kNoSlot, index);
  *vptr(s) = vptr(a)[index];
  return s;
}

Tape::Slot Tape::stack(std::span<const Slot> scalars) {
  Slot s = record(Op::stack, static_cast<int>(scalars.size()), kNoSlot, kNoSlot,
                  0, 0, 0.0, 0.0, scalars);
  double* po = vptr(s);
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    assert(slots_[scalars[i]].len == 1);
    po[i] = *vptr(scalars[i]);
  }
  return s;
}

Tape::Slot Tape::matvec(Slot w, int rows, int cols, Slot x) {
  if (slots_[w].len != rows * cols || slots_[x].len != cols)
    throw std::invalid_argument("matvec shape mismatch");
  Slot s = record(Op::matvec, rows, w, x, rows, cols);
  const double* pw = vptr(w);
  const double* px = vptr(x);
  double* po = vptr(s);
  for (int r = 0; r < rows; ++r) po[r] = kern::dot(pw + r * cols, px, cols);
  return s;
}

Tape::Slot Tape::softmax(Slot a) {
  const int n = slots_[a].len;
  Slot s = record(Op::softmax, n, a);
  const double* pa = vptr(a);
  double* po = vptr(s);
  const double m = kern::reduce_max(pa, n);
  if (m == kNegInf) {  // degenerate all -inf: fall back to uniform
    for (int i = 0; i < n; ++i) po[i] = 1.0 / n;
    return s;
  }
  kern::vadds(pa, -m, po, n);
  kern::vexp(po, po, n);
  const double z = kern::reduce_sum(po, n);
  kern::vscale(po, 1.0 / z, po, n);
  return s;
}

Tape::Slot Tape::log_softmax(Slot a) {
  const int n = slots_[a].len;
  Slot s = record(Op::log_softmax, n, a);
  const double* pa = vptr(a);
  double* po = vptr(s);
  const double lse = kern::log_sum_exp(pa, n);
  kern::vadds(pa, -lse, po, n);
  return s;
}

Tape::Slot Tape::cross_entropy_logits(Slot logits, int label) {
  if (label < 0 || label >= slots_[logits].len)
    throw std::invalid_argument("cross_entropy_logits: label out of range");
  Slot s = record(Op::cross_entropy_logits, 1, logits, kNoSlot, label);
  const double* pl = vptr(logits);
  *vptr(s) = kern::log_sum_exp(pl, slots_[logits].len) - pl[label];
  return s;
}

Tape::Slot Tape::gaussian_logpdf(Slot x, int x_index, Slot means, Slot log_stds,
                                 int p) {
  Slot extras[1] = {log_stds};
  Slot s = record(Op::gaussian_logpdf, 1, x, means, x_index, p, 0.0, 0.0, extras);
  const double xv = vptr(x)[x_index];
  const double mu = vptr(means)[p];
  double ls = vptr(log_stds)[p];
  ls = ls < -kLogStdClamp ? -kLogStdClamp : (ls > kLogStdClamp ? kLogStdClamp : ls);
  const double t = (xv - mu) * std::exp(-ls);
  *vptr(s) = -0.5 * t * t - ls - kHalfLog2Pi;
  return s;
}

Tape::Slot Tape::weighted_lse(std::span<const Slot> children, Slot logw) {
  if (children.empty()) throw std::invalid_argument("weighted_lse: no children");
  if (slots_[logw].len != static_cast<int>(children.size()))
    throw std::invalid_argument("weighted_lse: weight arity mismatch");
  const int w = slots_[children[0]].len;
  for (Slot c : children)
    if (slots_[c].len != w)
      throw std::invalid_argument("weighted_lse: child width mismatch");

  Slot s = record(Op::weighted_lse, w, kNoSlot, logw, 0, 0, 0.0, 0.0, children);
  scratch_.resize(static_cast<std::size_t>(2 * w));
  double* row = scratch_.data();
  double* acc = scratch_.data() + w;
  double* out = vptr(s);
  const double* plw = vptr(logw);

  std::fill(out, out + w, kNegInf);  // running max
  for (std::size_t i = 0; i < children.size(); ++i) {
    kern::vadds(vptr(children[i]), plw[i], row, w);
    kern::vmax(out, row, out, w);
  }
  // shifted exp-accumulate against a finite-clamped max, then recombine
  std::fill(acc, acc + w, 0.0);
  for (int k = 0; k < w; ++k)
    if (out[k] == kNegInf) out[k] = -std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < children.size(); ++i) {
    kern::vadds(vptr(children[i]), plw[i], row, w);
    kern::vsub(row, out, row, w);
    kern::vexp(row, row, w);
    kern::vadd(acc, row, acc, w);
  }
  kern::vlog(acc, acc, w);
  kern::vadd(out, acc, out, w);  // -max + log(0) = -inf when everything vanished
  return s;
}

// ---- Tape: inspection ---------------------------------------------------------

std::span<const double> Tape::value(Slot s) const {
  return {vptr(s), static_cast<std::size_t>(slots_[s].len)};
}

double Tape::scalar(Slot s) const {
  assert(slots_[s].len == 1);
  return *vptr(s);
}

std::vector<double> Tape::value_copy(Slot s) const {
  return {vptr(s), vptr(s) + slots_[s].len};
}

std::span<const double> Tape::grad(Slot s) const {
  return {grads_.data() + slots_[s].off, static_cast<std::size_t>(slots_[s].len)};
}

void Tape::reset() {
  slots_.clear();
  recs_.clear();
  vals_.clear();
  grads_.clear();
  extras_.clear();
  param_slots_.clear();
  param_index_.clear();
}

// ---- Tape: backward -----------------------------------------------------------

void Tape::backward(Slot loss) {
  if (slots_[loss].len != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  grads_.assign(vals_.size(), 0.0);
  grads_[slots_[loss].off] = 1.0;
  for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) backward_one(*it);
  for (const auto& [slot, param] : param_slots_)
    kern::axpy(1.0, grads_.data() + slots_[slot].off, param->grad.data(),
               param->size());
}

void Tape::backward_one(const Rec& r) {
  const int n = slots_[r.out].len;
  const double* g = grads_.data() + slots_[r.out].off;

  switch (r.op) {
    case Op::constant:
    case Op::param:
      break;
    case Op::add:
      kern::axpy(1.0, g, gptr(r.a), n);
      kern::axpy(1.0, g, gptr(r.b), n);
      break;
    case Op::sub:
      kern::axpy(1.0, g, gptr(r.a), n);
      kern::axpy(-1.0, g, gptr(r.b), n);
      break;
    case Op::mul: {
      const double* pa = vptr(r.a);
      const double* pb = vptr(r.b);
      double* ga = gptr(r.a);
      double* gb = gptr(r.b);
      for (int i = 0; i < n; ++i) {
        ga[i] += g[i] * pb[i];
        gb[i] += g[i] * pa[i];
      }
      break;
    }
    case Op::div: {
      const double* pb = vptr(r.b);
      const double* po = vptr(r.out);
      double* ga = gptr(r.a);
      double* gb = gptr(r.b);
      for (int i = 0; i < n; ++i) {
        ga[i] += g[i] / pb[i];
        gb[i] -= g[i] * po[i] / pb[i];
      }
      break;
    }
    case Op::add_scalar:
      kern::axpy(1.0, g, gptr(r.a), n);
      *gptr(r.b) += kern::reduce_sum(g, n);
      break;
    case Op::mul_scalar: {
      const double s = *vptr(r.b);
      kern::axpy(s, g, gptr(r.a), n);
      *gptr(r.b) += kern::dot(g, vptr(r.a), n);
      break;
    }
    case Op::div_scalar: {
      const double s = *vptr(r.b);
      kern::axpy(1.0 / s, g, gptr(r.a), n);
      *gptr(r.b) -= kern::dot(g, vptr(r.out), n) / s;
      break;
    }
    case Op::scale:
      kern::axpy(r.x0, g, gptr(r.a), n);
      break;
    case Op::shift:
      kern::axpy(1.0, g, gptr(r.a), n);
      break;
    case Op::exp: {
      const double* po = vptr(r.out);
      double* ga = gptr(r.a);
      for (int i = 0; i < n; ++i) ga[i] += g[i] * po[i];
      break;
    }
    case Op::log: {
      const double* pa = vptr(r.a);
      double* ga = gptr(r.a);
      for (int i = 0; i < n; ++i) ga[i] += g[i] / pa[i];
      break;
    }
    case Op::relu: {
      const double* pa = vptr(r.a);
      double* ga = gptr(r.a);
      for (int i = 0; i < n; ++i)
        if (pa[i] > 0.0) ga[i] += g[i];
      break;
    }
    case Op::tanh: {
      const double* po = vptr(r.out);
      double* ga = gptr(r.a);
      for (int i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - po[i] * po[i]);
      break;
    }
    case Op::clamp: {
      const double* pa = vptr(r.a);
      double* ga = gptr(r.a);
      for (int i = 0; i < n; ++i)
        if (pa[i] > r.x0 && pa[i] < r.x1) ga[i] += g[i];
      break;
    }
    case Op::sum:
      kern::vadds(gptr(r.a), *g, gptr(r.a), slots_[r.a].len);
      break;
    case Op::mean: {
      const double gs = *g / slots_[r.a].len;
      kern::vadds(gptr(r.a), gs, gptr(r.a), slots_[r.a].len);
      break;
    }
    case Op::dot:
      kern::axpy(*g, vptr(r.b), gptr(r.a), slots_[r.a].len);
      kern::axpy(*g, vptr(r.a), gptr(r.b), slots_[r.a].len);
      break;
    case Op::log_sum_exp: {
      const double out = *vptr(r.out);
      if (out == kNegInf) break;
      const double* pa = vptr(r.a);
      double* ga = gptr(r.a);
      const int m = slots_[r.a].len;
      for (int i = 0; i < m; ++i) ga[i] += *g * std::exp(pa[i] - out);
      break;
    }
    case Op::concat: {
      const double* gp = g;
      for (std::int32_t e = r.ex0; e < r.ex1; ++e) {
        Slot part = extras_[e];
        kern::axpy(1.0, gp, gptr(part), slots_[part].len);
        gp += slots_[part].len;
      }
      break;
    }
    case Op::slice:
      kern::axpy(1.0, g, gptr(r.a) + r.i0, n);
      break;
    case Op::pick:
      gptr(r.a)[r.i0] += *g;
      break;
    case Op::stack:
      for (std::int32_t e = r.ex0; e < r.ex1; ++e)
        *gptr(extras_[e]) += g[e - r.ex0];
      break;
    case Op::matvec: {
      const int rows = r.i0, cols = r.i1;
      const double* pw = vptr(r.a);
      const double* px = vptr(r.b);
      double* gw = gptr(r.a);
      double* gx = gptr(r.b);
      for (int row = 0; row < rows; ++row) {
        kern::axpy(g[row], px, gw + row * cols, cols);
        kern::axpy(g[row], pw + row * cols, gx, cols);
      }
      break;
    }
    case Op::softmax: {
      const double* po = vptr(r.out);
      double* ga = gptr(r.a);
      const double gd = kern::dot(g, po, n);
      for (int i = 0; i < n; ++i) ga[i] += (g[i] - gd) * po[i];
      break;
    }
    case Op::log_softmax: {
      const double* po = vptr(r.out);
      double* ga = gptr(r.a);
      const double gs = kern::reduce_sum(g, n);
      for (int i = 0; i < n; ++i) ga[i] += g[i] - gs * std::exp(po[i]);
      break;
    }
    case Op::cross_entropy_logits: {
      const double* pl = vptr(r.a);
      double* gl = gptr(r.a);
      const int m = slots_[r.a].len;
      const double lse = *vptr(r.out) + pl[r.i0];
      for (int i = 0; i < m; ++i) gl[i] += *g * std::exp(pl[i] - lse);
      gl[r.i0] -= *g;
      break;
    }
    case Op::gaussian_logpdf: {
      const Slot log_stds = extras_[r.ex0];
      const double xv = vptr(r.a)[r.i0];
      const double mu = vptr(r.b)[r.i1];
      const double ls_raw = vptr(log_stds)[r.i1];
      const double ls = ls_raw < -kLogStdClamp
                            ? -kLogStdClamp
                            : (ls_raw > kLogStdClamp ? kLogStdClamp : ls_raw);
      const double inv = std::exp(-ls);
      const double t = (xv - mu) * inv;
      gptr(r.a)[r.i0] += *g * (-t * inv);
      gptr(r.b)[r.i1] += *g * (t * inv);
      if (ls_raw > -kLogStdClamp && ls_raw < kLogStdClamp)
        gptr(log_stds)[r.i1] += *g * (t * t - 1.0);
      break;
    }
    case Op::weighted_lse: {
      const double* plw = vptr(r.b);
      const double* po = vptr(r.out);
      double* glw = gptr(r.b);
      for (std::int32_t e = r.ex0; e < r.ex1; ++e) {
        const Slot child = extras_[e];
        const std::size_t i = static_cast<std::size_t>(e - r.ex0);
        const double* pc = vptr(child);
        double* gc = gptr(child);
        double gw_acc = 0.0;
        for (int k = 0; k < n; ++k) {
          const double s =
              po[k] == kNegInf ? 0.0 : std::exp(plw[i] + pc[k] - po[k]);
          const double gs = g[k] * s;
          gc[k] += gs;
          gw_acc += gs;
        }
        glw[i] += gw_acc;
      }
      break;
    }
  }
}

}  // namespace c2mf::ad
