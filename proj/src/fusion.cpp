#include "c2mf/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "c2mf/kern/kernels.hpp"
#include "c2mf/model.hpp"

namespace c2mf::fusion {

bool uses_context(Method m) { return m == Method::c2dpc || m == Method::c2wm; }
bool uses_weighted_mean(Method m) { return m == Method::cwm || m == Method::c2wm; }

std::string_view method_name(Method m) {
  switch (m) {
    case Method::dpc: return "dpc";
    case Method::c2dpc: return "c2dpc";
    case Method::cwm: return "cwm";
    case Method::c2wm: return "c2wm";
  }
  return "?";
}

Method method_from_name(std::string_view name) {
  if (name == "dpc") return Method::dpc;
  if (name == "c2dpc") return Method::c2dpc;
  if (name == "cwm") return Method::cwm;
  if (name == "c2wm") return Method::c2wm;
  throw std::invalid_argument("unknown fusion method: " + std::string(name));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pc = p[k] < kKlClamp ? kKlClamp : (p[k] > 1.0 ? 1.0 : p[k]);
    const double qc = q[k] < kKlClamp ? kKlClamp : (q[k] > 1.0 ? 1.0 : q[k]);
    acc += p[k] * (std::log(pc) - std::log(qc));
  }
  return acc < 0.0 ? 0.0 : acc;  // true KL is nonnegative; clip rounding
}

std::vector<double> relative_from_csic(std::span<const double> csic) {
  const double total = kern::reduce_sum(csic.data(), csic.size());
  std::vector<double> rel(csic.size());
  if (total == 0.0) {
    std::fill(rel.begin(), rel.end(), 1.0 / static_cast<double>(csic.size()));
    return rel;
  }
  for (std::size_t m = 0; m < csic.size(); ++m) rel[m] = csic[m] / total;
  return rel;
}

namespace {

pc::Evidence evidence_from_preds(const pc::Circuit& c,
                                 const std::vector<std::vector<double>>& preds) {
  if (static_cast<int>(preds.size()) != c.num_modalities)
    throw std::invalid_argument("prediction count does not match modalities");
  pc::Evidence ev;
  ev.modality.reserve(preds.size());
  for (const auto& p : preds) ev.modality.push_back(nn::to_leaf_inputs(p));
  return ev;
}

}  // namespace

std::vector<double> fuse_posterior(const pc::Circuit& c,
                                   const pc::LeafParamsView& leaf,
                                   const pc::WeightAssignment& w,
                                   const std::vector<std::vector<double>>& preds) {
  return pc::posterior_over_target(c, leaf, w, evidence_from_preds(c, preds),
                                   pc::MarginalMask::none());
}

CredibilityReport compute_csic(const pc::Circuit& c,
                               const pc::LeafParamsView& leaf,
                               const pc::WeightAssignment& w,
                               const std::vector<std::vector<double>>& preds) {
  const pc::Evidence ev = evidence_from_preds(c, preds);
  CredibilityReport rep;
  rep.full_posterior =
      pc::posterior_over_target(c, leaf, w, ev, pc::MarginalMask::none());
  rep.csic.resize(c.num_modalities);
  rep.marginal_posteriors.resize(c.num_modalities);
  for (int m = 0; m < c.num_modalities; ++m) {
    rep.marginal_posteriors[m] =
        pc::posterior_over_target(c, leaf, w, ev, pc::MarginalMask::modality(m));
    rep.csic[m] = kl_divergence(rep.full_posterior, rep.marginal_posteriors[m]);
  }
  rep.relative_csic = relative_from_csic(rep.csic);
  return rep;
}

std::vector<double> fuse_weighted_mean(const CredibilityReport& report,
                                       const std::vector<std::vector<double>>& preds) {
  if (report.relative_csic.size() != preds.size())
    throw std::invalid_argument("fuse_weighted_mean: modality count mismatch");
  if (preds.empty()) throw std::invalid_argument("fuse_weighted_mean: no predictions");
  std::vector<double> out(preds[0].size(), 0.0);
  for (std::size_t m = 0; m < preds.size(); ++m) {
    if (preds[m].size() != out.size())
      throw std::invalid_argument("fuse_weighted_mean: length mismatch");
    kern::axpy(report.relative_csic[m], preds[m].data(), out.data(), out.size());
  }
  return out;
}

}  // namespace c2mf::fusion
