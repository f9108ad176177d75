#pragma once

#include <string>
#include <string_view>

#include "c2mf/dataset.hpp"

// Columnar text format for datasets (documented in the README):
//
//   # c2mf-dataset v1
//   # meta: <one-line JSON with the generating spec>     (optional)
//   # M=<M> K=<K> dims=<d0,d1,...>
//   # columns: label,prov_modality,prov_source_class,prov_donor_class,
//              x0_0..x0_{d0-1},x1_0..,...
//   <one CSV record per instance>
//
// Doubles are written in shortest round-trip form; save -> load -> save is
// byte-identical.

namespace c2mf::io {

std::string dataset_to_string(const Dataset& d, const std::string& meta_json = "");
Dataset dataset_from_string(std::string_view text, std::string* meta_json = nullptr);

void save_dataset(const std::string& path, const Dataset& d,
                  const std::string& meta_json = "");
Dataset load_dataset(const std::string& path, std::string* meta_json = nullptr);

// Shared low-level helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace c2mf::io
