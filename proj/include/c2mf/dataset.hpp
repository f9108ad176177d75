#pragma once

#include <string>
#include <vector>

// Multimodal instances with per-instance corruption provenance.

namespace c2mf {

struct Provenance {
  int modality = -1;      // corrupted modality, or -1 for clean
  int source_class = -1;  // instance's own class at corruption time
  int donor_class = -1;   // class the replacement features came from

  bool clean() const { return modality < 0; }
};

struct Instance {
  std::vector<std::vector<double>> x;  // per modality feature vectors
  int label = 0;
  Provenance prov;
};

struct Dataset {
  int num_modalities = 0;
  int num_classes = 0;
  std::vector<int> feature_dims;  // per modality
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
};

}  // namespace c2mf
