#include "pan/config.hpp"

#include <fstream>
#include <set>

#include "pan/errors.hpp"

namespace pan {

namespace {

using nlohmann::json;

// Pulls named fields out of one JSON object and rejects leftovers.
class FieldReader {
 public:
  FieldReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("expected a number");
      }
      out = it->template get<T>();
    } catch (const std::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* section(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(where_ + ": unknown field '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ObjectClass class_named(const std::string& name, const std::string& where) {
  const auto c = parse_class(name);
  if (!c) throw ConfigError(where + ": unknown class '" + name + "'");
  return *c;
}

Condition condition_named(const std::string& name, const std::string& where) {
  const auto c = parse_condition(name);
  if (!c) throw ConfigError(where + ": unknown condition '" + name + "'");
  return *c;
}

}  // namespace

PillarConfig pillar_config_from_json(const json& j) {
  PillarConfig c;
  FieldReader r(j, "pillars");
  r.read("x_min", c.x_min);
  r.read("x_max", c.x_max);
  r.read("y_min", c.y_min);
  r.read("y_max", c.y_max);
  r.read("pillar_size", c.pillar_size);
  r.read("max_points_per_pillar", c.max_points_per_pillar);
  r.read("raw_channels", c.raw_channels);
  r.read("out_channels", c.out_channels);
  r.finish();
  c.validate();
  return c;
}

EnhancerConfig enhancer_config_from_json(const json& j) {
  EnhancerConfig c;
  FieldReader r(j, "enhancer");
  r.read("embed_dim", c.embed_dim);
  r.read("num_heads", c.num_heads);
  r.read("dropout_p", c.dropout_p);
  r.read("conv_enabled", c.conv_enabled);
  r.read("conv_kernel", c.conv_kernel);
  r.read("dropout_after_softmax", c.dropout_after_softmax);
  r.read("use_attn_out", c.use_attn_out);
  r.read("layer_norm_eps", c.layer_norm_eps);
  r.finish();
  c.validate();
  return c;
}

EvalConfig eval_config_from_json(const json& j) {
  EvalConfig c;
  FieldReader r(j, "eval");
  r.read("match_thresholds_m", c.match_thresholds_m);
  r.read("range_filter", c.range_filter);
  r.read("min_recall", c.min_recall);
  r.read("min_precision", c.min_precision);
  r.read("tp_threshold_m", c.tp_threshold_m);
  r.finish();
  c.validate();
  return c;
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  FieldReader r(j, "scene");
  r.read("n_objects", s.n_objects);
  if (const json* mix = r.section("class_mix")) {
    if (!mix->is_object()) throw ConfigError("scene.class_mix: expected an object of class -> weight");
    s.class_mix.clear();
    for (const auto& [name, weight] : mix->items()) {
      if (!weight.is_number()) throw ConfigError("scene.class_mix." + name + ": expected a number");
      s.class_mix.push_back({class_named(name, "scene.class_mix"), weight.get<double>()});
    }
  }
  r.read("min_range", s.min_range);
  r.read("max_range", s.max_range);
  r.read("min_speed", s.min_speed);
  r.read("max_speed", s.max_speed);
  r.read("min_points_per_object", s.min_points_per_object);
  r.read("max_points_per_object", s.max_points_per_object);
  r.read("clutter_rate", s.clutter_rate);
  r.read("clutter_half_extent", s.clutter_half_extent);
  r.read("position_sigma", s.position_sigma);
  r.read("velocity_sigma", s.velocity_sigma);
  r.read("rcs_sigma", s.rcs_sigma);
  r.read("n_sweeps", s.n_sweeps);
  r.read("sweep_interval", s.sweep_interval);
  std::string cond;
  r.read("condition", cond);
  if (!cond.empty()) s.condition = condition_named(cond, "scene.condition");
  r.read("max_placement_attempts", s.max_placement_attempts);
  r.finish();
  s.validate();
  return s;
}

PerturbSpec perturb_spec_from_json(const json& j) {
  PerturbSpec p;
  FieldReader r(j, "perturb");
  r.read("translation_sigma", p.translation_sigma);
  r.read("scale_sigma", p.scale_sigma);
  r.read("yaw_sigma", p.yaw_sigma);
  r.read("velocity_sigma", p.velocity_sigma);
  r.read("drop_probability", p.drop_probability);
  r.read("fp_rate", p.fp_rate);
  r.read("attribute_flip_probability", p.attribute_flip_probability);
  r.read("tp_score_min", p.tp_score_min);
  r.read("tp_score_max", p.tp_score_max);
  r.read("fp_score_min", p.fp_score_min);
  r.read("fp_score_max", p.fp_score_max);
  r.read("fp_max_range", p.fp_max_range);
  r.finish();
  p.validate();
  return p;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  FieldReader r(j, "config");
  if (const json* s = r.section("pillars")) c.pan.pillars = pillar_config_from_json(*s);
  if (const json* s = r.section("enhancer")) c.pan.enhancer = enhancer_config_from_json(*s);
  if (const json* s = r.section("eval")) c.eval = eval_config_from_json(*s);
  r.finish();
  c.pan.validate();
  return c;
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec d;
  FieldReader r(j, "spec");
  r.read("frames", d.frames);
  if (const json* s = r.section("scene")) d.scene = scene_spec_from_json(*s);
  if (const json* s = r.section("perturb")) d.perturb = perturb_spec_from_json(*s);
  std::vector<std::string> conditions;
  r.read("conditions", conditions);
  for (const auto& name : conditions) d.condition_cycle.push_back(condition_named(name, "spec.conditions"));
  r.finish();
  return d;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace pan
