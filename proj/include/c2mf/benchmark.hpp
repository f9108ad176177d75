#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "c2mf/dataset.hpp"
#include "c2mf/fusion.hpp"

// Synthetic multimodal data, the Conflict corruption framework, and the
// evaluation metrics (classification + RMIS).

namespace c2mf::bench {

struct SyntheticSpec {
  int num_modalities = 2;
  int num_classes = 10;
  std::vector<int> feature_dims;                         // per modality
  std::vector<std::vector<std::vector<double>>> means;   // [m][k][dim]
  std::vector<double> stds;                              // per modality
  int n_train = 5000, n_val = 1000, n_test = 2000;
  std::uint64_t seed = 1;
};

// Class-conditional means drawn from N(0, mean_scale^2) per dimension,
// resampled until every pair of class means within a modality is at least
// `min_separation_stds` standard deviations apart.
SyntheticSpec make_separated_spec(int num_modalities, int num_classes,
                                  const std::vector<int>& feature_dims,
                                  double mean_scale, double std,
                                  int n_train, int n_val, int n_test,
                                  std::uint64_t seed,
                                  double min_separation_stds = 6.0);

struct SyntheticData {
  Dataset train, val, test;
};

// Uniform class per instance, per-modality features from that class's
// Gaussian. Deterministic in spec.seed; all provenance clean.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

struct ConflictSpec {
  std::vector<std::vector<int>> class_sets;   // c_m per modality
  // Donor classes per modality; empty means every class not in c_m.
  std::vector<std::vector<int>> donor_classes;
  double lambda_train = 0.7;
  double lambda_test = 1.0;
  std::uint64_t seed = 1;
};

// For each modality m and class c in c_m, replaces modality-m features of
// exactly floor(lambda * n_c) still-clean class-c instances with those of a
// uniformly drawn donor instance whose class is outside c_m. Labels and all
// other modalities are untouched; the donor record is not modified.
Dataset apply_conflict(const Dataset& data, const ConflictSpec& spec,
                       double lambda, std::uint64_t seed);

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> rmis_overall;
  std::vector<std::optional<double>> rmis_by_modality;
  std::vector<double> mean_csic;  // per modality, over all instances
  int n_instances = 0;
  int n_corrupted = 0;
};

int argmax_lowest(std::span<const double> v);

// Argmax decisions (lowest index wins ties); macro averaging with the
// 0-convention for classes never predicted / never present.
Metrics classification_metrics(const std::vector<std::vector<double>>& predictions,
                               std::span<const int> labels, int num_classes);

// Fills the RMIS and mean-CSIC fields from per-instance credibility reports.
// RMIS is computed over corrupted instances only: score 1 iff the corrupted
// modality's CSIC is <= the minimum CSIC among clean modalities.
void add_rmis(Metrics& metrics, const std::vector<fusion::CredibilityReport>& reports,
              const Dataset& data);

}  // namespace c2mf::bench
