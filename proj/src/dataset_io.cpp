#include "c2mf/dataset_io.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "c2mf/errors.hpp"
#include "c2mf/text.hpp"

namespace c2mf::io {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string dataset_to_string(const Dataset& d, const std::string& meta_json) {
  std::ostringstream os;
  os << "# c2mf-dataset v1\n";
  if (!meta_json.empty()) os << "# meta: " << meta_json << "\n";
  os << "# M=" << d.num_modalities << " K=" << d.num_classes << " dims=";
  for (int m = 0; m < d.num_modalities; ++m) {
    if (m) os << ",";
    os << d.feature_dims[m];
  }
  os << "\n# columns: label,prov_modality,prov_source_class,prov_donor_class";
  for (int m = 0; m < d.num_modalities; ++m)
    for (int j = 0; j < d.feature_dims[m]; ++j) os << ",x" << m << "_" << j;
  os << "\n";
  for (const Instance& inst : d.instances) {
    os << inst.label << "," << inst.prov.modality << "," << inst.prov.source_class
       << "," << inst.prov.donor_class;
    for (int m = 0; m < d.num_modalities; ++m)
      for (int j = 0; j < d.feature_dims[m]; ++j)
        os << "," << format_double(inst.x[m][j]);
    os << "\n";
  }
  return os.str();
}

Dataset dataset_from_string(std::string_view text, std::string* meta_json) {
  Dataset d;
  bool saw_magic = false, saw_dims = false;
  if (meta_json) meta_json->clear();

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;

    if (line[0] == '#') {
      if (line.rfind("# c2mf-dataset v1", 0) == 0) {
        saw_magic = true;
      } else if (line.rfind("# meta: ", 0) == 0) {
        if (meta_json) *meta_json = std::string(line.substr(8));
      } else if (line.rfind("# M=", 0) == 0) {
        std::string_view rest = line.substr(4);
        const std::size_t ksep = rest.find(" K=");
        const std::size_t dsep = rest.find(" dims=");
        if (ksep == std::string_view::npos || dsep == std::string_view::npos)
          throw DataError("malformed dataset header line");
        d.num_modalities = static_cast<int>(parse_long(rest.substr(0, ksep)));
        d.num_classes =
            static_cast<int>(parse_long(rest.substr(ksep + 3, dsep - ksep - 3)));
        for (auto tok : split(rest.substr(dsep + 6), ','))
          d.feature_dims.push_back(static_cast<int>(parse_long(tok)));
        if (static_cast<int>(d.feature_dims.size()) != d.num_modalities)
          throw DataError("dataset header dims count mismatch");
        saw_dims = true;
      }
      continue;
    }

    if (!saw_magic || !saw_dims)
      throw DataError("dataset records before header");
    const auto fields = split(line, ',');
    std::size_t expect = 4;
    for (int m = 0; m < d.num_modalities; ++m) expect += d.feature_dims[m];
    if (fields.size() != expect)
      throw DataError("dataset record has wrong field count");
    Instance inst;
    inst.label = static_cast<int>(parse_long(fields[0]));
    inst.prov.modality = static_cast<int>(parse_long(fields[1]));
    inst.prov.source_class = static_cast<int>(parse_long(fields[2]));
    inst.prov.donor_class = static_cast<int>(parse_long(fields[3]));
    std::size_t f = 4;
    inst.x.resize(d.num_modalities);
    for (int m = 0; m < d.num_modalities; ++m) {
      inst.x[m].resize(d.feature_dims[m]);
      for (int j = 0; j < d.feature_dims[m]; ++j)
        inst.x[m][j] = parse_double(fields[f++]);
    }
    d.instances.push_back(std::move(inst));
  }
  if (!saw_magic) throw DataError("not a c2mf dataset file");
  if (!saw_dims) throw DataError("dataset file missing header");
  return d;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed: " + path);
}

void save_dataset(const std::string& path, const Dataset& d,
                  const std::string& meta_json) {
  write_file(path, dataset_to_string(d, meta_json));
}

Dataset load_dataset(const std::string& path, std::string* meta_json) {
  return dataset_from_string(read_file(path), meta_json);
}

}  // namespace c2mf::io
