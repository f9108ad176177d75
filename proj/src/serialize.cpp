#include "c2mf/serialize.hpp"

#include <stdexcept>

#include "c2mf/dataset_io.hpp"
#include "c2mf/errors.hpp"

namespace c2mf::io {

using nlohmann::json;

namespace {

json parse(std::string_view text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError(std::string("malformed JSON in ") + what);
  return j;
}

void expect_format(const json& j, const std::string& fmt, int version) {
  if (!j.is_object() || j.value("format", "") != fmt ||
      j.value("version", -1) != version)
    throw DataError("unexpected container format (want " + fmt + " v" +
                    std::to_string(version) + ")");
}

}  // namespace

json circuit_to_json(const pc::Circuit& c) {
  json nodes = json::array();
  const int K = c.num_classes;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    const pc::CircuitNode& nd = c.nodes[i];
    json jn;
    jn["id"] = i;
    switch (nd.kind) {
      case pc::NodeKind::gaussian_leaf:
        jn["kind"] = "gauss";
        jn["m"] = nd.var.modality;
        jn["dim"] = nd.var.dim;
        jn["p"] = nd.param_index;
        jn["mean"] = c.leaf.gauss_mean.at(nd.param_index);
        jn["log_std"] = c.leaf.gauss_log_std.at(nd.param_index);
        break;
      case pc::NodeKind::categorical_leaf: {
        jn["kind"] = "cat";
        jn["p"] = nd.param_index;
        json logits = json::array();
        for (int k = 0; k < K; ++k)
          logits.push_back(c.leaf.cat_logits.at(
              static_cast<std::size_t>(nd.param_index) * K + k));
        jn["logits"] = std::move(logits);
        break;
      }
      case pc::NodeKind::product:
        jn["kind"] = "prod";
        jn["children"] = nd.children;
        break;
      case pc::NodeKind::sum:
        jn["kind"] = "sum";
        jn["children"] = nd.children;
        jn["w"] = nd.weight_slot;
        break;
    }
    nodes.push_back(std::move(jn));
  }

  json j;
  j["format"] = "c2mf-circuit";
  j["version"] = 1;
  j["num_modalities"] = c.num_modalities;
  j["num_classes"] = c.num_classes;
  j["leaf_dims"] = c.leaf_dims;
  j["root"] = c.root;
  j["nodes"] = std::move(nodes);
  return j;
}

pc::Circuit circuit_from_json(const json& j) {
  expect_format(j, "c2mf-circuit", 1);
  pc::Circuit c;
  c.num_modalities = j.at("num_modalities").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.leaf_dims = j.at("leaf_dims").get<std::vector<int>>();
  c.root = j.at("root").get<std::int32_t>();
  const int K = c.num_classes;

  for (const json& jn : j.at("nodes")) {
    pc::CircuitNode nd;
    const std::string kind = jn.at("kind").get<std::string>();
    if (kind == "gauss") {
      nd.kind = pc::NodeKind::gaussian_leaf;
      nd.var = pc::VariableId::modality_dim(jn.at("m").get<int>(),
                                            jn.at("dim").get<int>());
      nd.param_index = jn.at("p").get<std::int32_t>();
      const std::size_t need = static_cast<std::size_t>(nd.param_index) + 1;
      if (c.leaf.gauss_mean.size() < need) {
        c.leaf.gauss_mean.resize(need, 0.0);
        c.leaf.gauss_log_std.resize(need, 0.0);
      }
      c.leaf.gauss_mean[nd.param_index] = jn.at("mean").get<double>();
      c.leaf.gauss_log_std[nd.param_index] = jn.at("log_std").get<double>();
    } else if (kind == "cat") {
      nd.kind = pc::NodeKind::categorical_leaf;
      nd.var = pc::VariableId::target();
      nd.param_index = jn.at("p").get<std::int32_t>();
      const auto logits = jn.at("logits").get<std::vector<double>>();
      if (static_cast<int>(logits.size()) != K)
        throw DataError("categorical logits length mismatch");
      const std::size_t need = (static_cast<std::size_t>(nd.param_index) + 1) * K;
      if (c.leaf.cat_logits.size() < need) c.leaf.cat_logits.resize(need, 0.0);
      std::copy(logits.begin(), logits.end(),
                c.leaf.cat_logits.begin() +
                    static_cast<std::size_t>(nd.param_index) * K);
    } else if (kind == "prod") {
      nd.kind = pc::NodeKind::product;
      nd.children = jn.at("children").get<std::vector<std::int32_t>>();
    } else if (kind == "sum") {
      nd.kind = pc::NodeKind::sum;
      nd.children = jn.at("children").get<std::vector<std::int32_t>>();
      nd.weight_slot = jn.at("w").get<std::int32_t>();
    } else {
      throw DataError("unknown circuit node kind: " + kind);
    }
    c.nodes.push_back(std::move(nd));
  }

  pc::ValidationReport rep = pc::validate(c);
  if (!rep.ok()) throw DataError("loaded circuit invalid: " + rep.to_string());
  return c;
}

std::string circuit_to_string(const pc::Circuit& c) {
  return circuit_to_json(c).dump(1) + "\n";
}

pc::Circuit circuit_from_string(std::string_view text) {
  return circuit_from_json(parse(text, "circuit"));
}

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["num_modalities"] = cfg.num_modalities;
  j["num_classes"] = cfg.num_classes;
  j["feature_dims"] = cfg.feature_dims;
  j["encoder_hidden"] = cfg.encoder_hidden;
  j["d_h"] = cfg.d_h;
  j["aggregator_hidden"] = cfg.aggregator_hidden;
  j["d_z"] = cfg.d_z;
  j["hypernet_hidden"] = cfg.hypernet_hidden;
  j["circuit"] = {{"depth", cfg.circuit.depth},
                  {"num_sums", cfg.circuit.num_sums},
                  {"num_repetitions", cfg.circuit.num_repetitions}};
  j["method"] = std::string(fusion::method_name(cfg.method));
  j["seed"] = cfg.seed;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.num_modalities = j.at("num_modalities").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.feature_dims = j.at("feature_dims").get<std::vector<int>>();
  cfg.encoder_hidden = j.value("encoder_hidden", cfg.encoder_hidden);
  cfg.d_h = j.value("d_h", cfg.d_h);
  cfg.aggregator_hidden = j.value("aggregator_hidden", cfg.aggregator_hidden);
  cfg.d_z = j.value("d_z", cfg.d_z);
  cfg.hypernet_hidden = j.value("hypernet_hidden", cfg.hypernet_hidden);
  if (j.contains("circuit")) {
    const json& jc = j.at("circuit");
    cfg.circuit.depth = jc.value("depth", cfg.circuit.depth);
    cfg.circuit.num_sums = jc.value("num_sums", cfg.circuit.num_sums);
    cfg.circuit.num_repetitions =
        jc.value("num_repetitions", cfg.circuit.num_repetitions);
  }
  cfg.method = fusion::method_from_name(j.value("method", "c2dpc"));
  cfg.seed = j.value("seed", std::uint64_t{1});
  return cfg;
}

std::string checkpoint_to_string(const C2mfModel& model, const json& meta) {
  json j;
  j["format"] = "c2mf-checkpoint";
  j["version"] = 1;
  j["config"] = model_config_to_json(model.config());
  j["circuit"] = circuit_to_json(model.circuit_with_leaves());
  j["meta"] = meta;
  json params = json::object();
  const auto& store = model.params();
  for (std::size_t i = 0; i < store.count(); ++i)
    params[store.at(i).name] = store.at(i).value;
  j["params"] = std::move(params);
  return j.dump(1) + "\n";
}

C2mfModel checkpoint_from_string(std::string_view text, json* meta) {
  const json j = parse(text, "checkpoint");
  expect_format(j, "c2mf-checkpoint", 1);
  ModelConfig cfg = model_config_from_json(j.at("config"));
  pc::Circuit circuit = circuit_from_json(j.at("circuit"));
  C2mfModel model(std::move(cfg), std::move(circuit));
  const json& params = j.at("params");
  auto& store = model.params();
  for (std::size_t i = 0; i < store.count(); ++i) {
    ad::Parameter& p = store.at(i);
    auto it = params.find(p.name);
    if (it == params.end())
      throw DataError("checkpoint missing parameter: " + p.name);
    const auto vals = it->get<std::vector<double>>();
    if (vals.size() != p.size())
      throw DataError("checkpoint parameter size mismatch: " + p.name);
    p.value = vals;
  }
  if (params.size() != store.count())
    throw DataError("checkpoint has unexpected extra parameters");
  if (meta) *meta = j.value("meta", json::object());
  return model;
}

void save_checkpoint(const std::string& path, const C2mfModel& model,
                     const json& meta) {
  write_file(path, checkpoint_to_string(model, meta));
}

C2mfModel load_checkpoint(const std::string& path, json* meta) {
  return checkpoint_from_string(read_file(path), meta);
}

}  // namespace c2mf::io
