#include "c2mf/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "c2mf/errors.hpp"
#include "c2mf/rng.hpp"

namespace c2mf::bench {

SyntheticSpec make_separated_spec(int num_modalities, int num_classes,
                                  const std::vector<int>& feature_dims,
                                  double mean_scale, double std, int n_train,
                                  int n_val, int n_test, std::uint64_t seed,
                                  double min_separation_stds) {
  if (num_modalities < 1 || num_classes < 2)
    throw DataError("make_separated_spec: need M >= 1, K >= 2");
  if (static_cast<int>(feature_dims.size()) != num_modalities)
    throw DataError("make_separated_spec: feature_dims size mismatch");

  SyntheticSpec spec;
  spec.num_modalities = num_modalities;
  spec.num_classes = num_classes;
  spec.feature_dims = feature_dims;
  spec.stds.assign(num_modalities, std);
  spec.n_train = n_train;
  spec.n_val = n_val;
  spec.n_test = n_test;
  spec.seed = seed;

  Rng rng(derive_seed(seed, "means"));
  const double min_dist = min_separation_stds * std;
  spec.means.resize(num_modalities);
  for (int m = 0; m < num_modalities; ++m) {
    auto& cm = spec.means[m];
    cm.assign(num_classes, std::vector<double>(feature_dims[m]));
    for (int k = 0; k < num_classes; ++k) {
      for (int attempt = 0;; ++attempt) {
        for (double& v : cm[k]) v = mean_scale * rng.normal();
        bool ok = true;
        for (int j = 0; j < k && ok; ++j) {
          double d2 = 0.0;
          for (int d = 0; d < feature_dims[m]; ++d) {
            const double diff = cm[k][d] - cm[j][d];
            d2 += diff * diff;
          }
          ok = d2 >= min_dist * min_dist;
        }
        if (ok) break;
        if (attempt > 10000)
          throw DataError("make_separated_spec: cannot satisfy separation");
      }
    }
  }
  return spec;
}

namespace {

Dataset generate_split(const SyntheticSpec& spec, int n, Rng& rng) {
  Dataset d;
  d.num_modalities = spec.num_modalities;
  d.num_classes = spec.num_classes;
  d.feature_dims = spec.feature_dims;
  d.instances.reserve(n);
  for (int i = 0; i < n; ++i) {
    Instance inst;
    inst.label = rng.index(spec.num_classes);
    inst.x.resize(spec.num_modalities);
    for (int m = 0; m < spec.num_modalities; ++m) {
      inst.x[m].resize(spec.feature_dims[m]);
      for (int dim = 0; dim < spec.feature_dims[m]; ++dim)
        inst.x[m][dim] =
            rng.normal(spec.means[m][inst.label][dim], spec.stds[m]);
    }
    d.instances.push_back(std::move(inst));
  }
  return d;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_modalities < 1 || spec.num_classes < 2)
    throw DataError("generate_synthetic: need M >= 1, K >= 2");
  if (static_cast<int>(spec.means.size()) != spec.num_modalities ||
      static_cast<int>(spec.stds.size()) != spec.num_modalities)
    throw DataError("generate_synthetic: means/stds shape mismatch");
  if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0)
    throw DataError("generate_synthetic: negative split size");

  Rng rng(derive_seed(spec.seed, "synthetic"));
  SyntheticData out;
  out.train = generate_split(spec, spec.n_train, rng);
  out.val = generate_split(spec, spec.n_val, rng);
  out.test = generate_split(spec, spec.n_test, rng);
  return out;
}

Dataset apply_conflict(const Dataset& data, const ConflictSpec& spec,
                       double lambda, std::uint64_t seed) {
  if (lambda < 0.0 || lambda > 1.0)
    throw DataError("conflict ratio must be in [0, 1]");
  if (static_cast<int>(spec.class_sets.size()) != data.num_modalities)
    throw DataError("class_sets size must equal modality count");
  if (!spec.donor_classes.empty() &&
      static_cast<int>(spec.donor_classes.size()) != data.num_modalities)
    throw DataError("donor_classes size must equal modality count");

  Dataset out = data;
  const int K = data.num_classes;

  // per-class instance index lists (donor pools draw on original features,
  // which replacement never touches: donors are never in c_m)
  std::vector<std::vector<int>> by_class(K);
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const int y = data.instances[i].label;
    if (y < 0 || y >= K) throw DataError("label out of range in dataset");
    by_class[y].push_back(static_cast<int>(i));
  }

  Rng rng(derive_seed(seed, "conflict"));
  for (int m = 0; m < data.num_modalities; ++m) {
    std::vector<int> cset = spec.class_sets[m];
    std::sort(cset.begin(), cset.end());
    for (int c : cset)
      if (c < 0 || c >= K) throw DataError("corrupted class out of range");

    std::vector<int> donors;
    if (!spec.donor_classes.empty() && !spec.donor_classes[m].empty()) {
      donors = spec.donor_classes[m];
      std::sort(donors.begin(), donors.end());
      for (int c : donors)
        if (std::binary_search(cset.begin(), cset.end(), c))
          throw DataError("donor class inside the corrupted class set");
    } else {
      for (int c = 0; c < K; ++c)
        if (!std::binary_search(cset.begin(), cset.end(), c)) donors.push_back(c);
    }
    if (donors.empty()) throw DataError("empty donor class pool");

    for (int c : cset) {
      const auto& members = by_class[c];
      const int n_c = static_cast<int>(members.size());
      const int want = static_cast<int>(std::floor(lambda * n_c));
      if (want == 0) continue;
      // eligible = still-clean instances of class c
      std::vector<int> eligible;
      eligible.reserve(members.size());
      for (int idx : members)
        if (out.instances[idx].prov.clean()) eligible.push_back(idx);
      if (static_cast<int>(eligible.size()) < want)
        throw DataError("not enough clean instances of class " + std::to_string(c) +
                        " for modality " + std::to_string(m) +
                        " (overlapping class sets)");
      // seeded partial Fisher-Yates
      for (int i = 0; i < want; ++i)
        std::swap(eligible[i],
                  eligible[i + rng.index(static_cast<int>(eligible.size()) - i)]);
      for (int i = 0; i < want; ++i) {
        const int victim = eligible[i];
        const int donor_class = donors[rng.index(static_cast<int>(donors.size()))];
        const auto& pool = by_class[donor_class];
        if (pool.empty()) throw DataError("empty donor pool for class " +
                                          std::to_string(donor_class));
        const int donor = pool[rng.index(static_cast<int>(pool.size()))];
        out.instances[victim].x[m] = data.instances[donor].x[m];
        out.instances[victim].prov = {m, c, donor_class};
      }
    }
  }
  return out;
}

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

Metrics classification_metrics(const std::vector<std::vector<double>>& predictions,
                               std::span<const int> labels, int num_classes) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw DataError("classification_metrics: empty or mismatched inputs");

  std::vector<long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  long correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) throw DataError("label out of range");
    const int pred = argmax_lowest(predictions[i]);
    if (pred == y) {
      ++tp[y];
      ++correct;
    } else {
      ++fp[pred];
      ++fn[y];
    }
  }

  Metrics m;
  m.n_instances = static_cast<int>(predictions.size());
  m.accuracy = static_cast<double>(correct) / predictions.size();
  double psum = 0.0, rsum = 0.0, fsum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const double denp = static_cast<double>(tp[c] + fp[c]);
    const double denr = static_cast<double>(tp[c] + fn[c]);
    const double prec = denp > 0 ? tp[c] / denp : 0.0;
    const double rec = denr > 0 ? tp[c] / denr : 0.0;
    const double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    psum += prec;
    rsum += rec;
    fsum += f1;
  }
  m.macro_precision = psum / num_classes;
  m.macro_recall = rsum / num_classes;
  m.macro_f1 = fsum / num_classes;
  return m;
}

void add_rmis(Metrics& metrics, const std::vector<fusion::CredibilityReport>& reports,
              const Dataset& data) {
  if (reports.size() != data.instances.size())
    throw DataError("add_rmis: reports not aligned with dataset");
  const int M = data.num_modalities;

  metrics.mean_csic.assign(M, 0.0);
  for (const auto& rep : reports)
    for (int m = 0; m < M; ++m) metrics.mean_csic[m] += rep.csic[m];
  for (int m = 0; m < M; ++m)
    metrics.mean_csic[m] /= static_cast<double>(reports.size());

  std::vector<long> hits(M, 0), totals(M, 0);
  long hit_all = 0, total_all = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const Provenance& prov = data.instances[i].prov;
    if (prov.clean()) continue;
    const int mc = prov.modality;
    double clean_min = std::numeric_limits<double>::infinity();
    for (int m = 0; m < M; ++m)
      if (m != mc) clean_min = std::min(clean_min, reports[i].csic[m]);
    const bool ok = reports[i].csic[mc] <= clean_min;  // ties count as correct
    ++totals[mc];
    ++total_all;
    if (ok) {
      ++hits[mc];
      ++hit_all;
    }
  }
  metrics.n_corrupted = static_cast<int>(total_all);
  metrics.rmis_by_modality.assign(M, std::nullopt);
  if (total_all == 0) {
    metrics.rmis_overall.reset();
    return;
  }
  metrics.rmis_overall = static_cast<double>(hit_all) / total_all;
  for (int m = 0; m < M; ++m)
    if (totals[m] > 0)
      metrics.rmis_by_modality[m] = static_cast<double>(hits[m]) / totals[m];
}

}  // namespace c2mf::bench
