#pragma once

#include <string>

#include <json.hpp>

#include "pan/backbone.hpp"
#include "pan/metrics.hpp"
#include "pan/synth.hpp"

namespace pan {

// JSON configuration documents. Field names match the struct members;
// missing fields keep their defaults and unknown fields throw ConfigError.
//
// Pipeline config: {"pillars": {...}, "enhancer": {...}, "eval": {...}}.
// Generation spec: {"frames": n, "scene": {...}, "perturb": {...},
//                   "conditions": ["day", ...]}.

PillarConfig pillar_config_from_json(const nlohmann::json& j);
EnhancerConfig enhancer_config_from_json(const nlohmann::json& j);
EvalConfig eval_config_from_json(const nlohmann::json& j);
SceneSpec scene_spec_from_json(const nlohmann::json& j);
PerturbSpec perturb_spec_from_json(const nlohmann::json& j);

struct PipelineConfig {
  PanConfig pan;
  EvalConfig eval;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Reads and parses a JSON file; errors name the path.
nlohmann::json read_json_file(const std::string& path);

}  // namespace pan
