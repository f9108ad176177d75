#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "c2mf/c2mf_model.hpp"
#include "c2mf/circuit.hpp"

// Versioned JSON containers for circuits and full model checkpoints.
// nlohmann::json keeps object keys sorted and prints doubles in shortest
// round-trip form, so save -> load -> save is byte-identical.

namespace c2mf::io {

nlohmann::json circuit_to_json(const pc::Circuit& c);
pc::Circuit circuit_from_json(const nlohmann::json& j);

std::string circuit_to_string(const pc::Circuit& c);
pc::Circuit circuit_from_string(std::string_view text);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Single-file checkpoint: model config, circuit structure + leaf parameters,
// every parameter tensor by name, plus free-form provenance metadata.
std::string checkpoint_to_string(const C2mfModel& model,
                                 const nlohmann::json& meta);
C2mfModel checkpoint_from_string(std::string_view text,
                                 nlohmann::json* meta = nullptr);

void save_checkpoint(const std::string& path, const C2mfModel& model,
                     const nlohmann::json& meta);
C2mfModel load_checkpoint(const std::string& path, nlohmann::json* meta = nullptr);

}  // namespace c2mf::io
