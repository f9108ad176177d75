#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "c2mf/circuit.hpp"

// The four late-fusion strategies and the credibility math. DPC/C2DPC fuse by
// conditional inference in the circuit; CWM/C2WM average the unimodal
// predictions weighted by relative CSIC. The static and context-conditioned
// variants differ only in where the WeightAssignment comes from.

namespace c2mf::fusion {

enum class Method { dpc, c2dpc, cwm, c2wm };

bool uses_context(Method m);        // c2dpc, c2wm
bool uses_weighted_mean(Method m);  // cwm, c2wm
std::string_view method_name(Method m);
Method method_from_name(std::string_view name);

struct CredibilityReport {
  std::vector<double> csic;           // per modality, >= 0
  std::vector<double> relative_csic;  // sums to 1 (uniform when csic is all 0)
  std::vector<std::vector<double>> marginal_posteriors;  // modality m masked
  std::vector<double> full_posterior;
};

constexpr double kKlClamp = 1e-12;

// sum_k p_k (log p~_k - log q~_k), both clamped at 1e-12; never negative.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// csic / sum(csic), or uniform 1/M when the total is zero.
std::vector<double> relative_from_csic(std::span<const double> csic);

// Circuit posterior with all modalities observed (the DPC/C2DPC prediction).
std::vector<double> fuse_posterior(const pc::Circuit& c,
                                   const pc::LeafParamsView& leaf,
                                   const pc::WeightAssignment& w,
                                   const std::vector<std::vector<double>>& preds);

// Full posterior, per-modality marginal posteriors, and the KL credibility.
CredibilityReport compute_csic(const pc::Circuit& c,
                               const pc::LeafParamsView& leaf,
                               const pc::WeightAssignment& w,
                               const std::vector<std::vector<double>>& preds);

// sum_m relative_csic_m * p_m (the CWM/C2WM prediction).
std::vector<double> fuse_weighted_mean(const CredibilityReport& report,
                                       const std::vector<std::vector<double>>& preds);

}  // namespace c2mf::fusion
