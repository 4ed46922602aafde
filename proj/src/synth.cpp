#include "pan/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "pan/errors.hpp"

namespace pan {

namespace {

bool is_vehicle(ObjectClass c) {
  return c == ObjectClass::kCar || c == ObjectClass::kTruck || c == ObjectClass::kBus || c == ObjectClass::kTrailer ||
         c == ObjectClass::kConstructionVehicle;
}

bool is_cycle(ObjectClass c) { return c == ObjectClass::kMotorcycle || c == ObjectClass::kBicycle; }
bool is_static(ObjectClass c) { return c == ObjectClass::kTrafficCone || c == ObjectClass::kBarrier; }

double base_rcs(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar: return 10.0;
    case ObjectClass::kTruck:
    case ObjectClass::kTrailer:
    case ObjectClass::kConstructionVehicle: return 15.0;
    case ObjectClass::kBus: return 18.0;
    case ObjectClass::kPedestrian: return -5.0;
    case ObjectClass::kMotorcycle: return 3.0;
    case ObjectClass::kBicycle: return 0.0;
    case ObjectClass::kTrafficCone: return -8.0;
    case ObjectClass::kBarrier: return 5.0;
  }
  return 0.0;
}

constexpr double kClutterRcs = -10.0;

std::optional<Attribute> attribute_for(ObjectClass c, double speed) {
  if (is_vehicle(c)) return speed > 0.5 ? Attribute::kVehicleMoving : Attribute::kVehicleParked;
  if (is_cycle(c)) return speed > 0.5 ? Attribute::kCycleWithRider : Attribute::kCycleWithoutRider;
  if (c == ObjectClass::kPedestrian) return speed > 0.3 ? Attribute::kPedestrianMoving : Attribute::kPedestrianStanding;
  return std::nullopt;
}

std::vector<Attribute> attributes_of(ObjectClass c) {
  if (is_vehicle(c)) return {Attribute::kVehicleMoving, Attribute::kVehicleParked, Attribute::kVehicleStopped};
  if (is_cycle(c)) return {Attribute::kCycleWithRider, Attribute::kCycleWithoutRider};
  if (c == ObjectClass::kPedestrian) {
    return {Attribute::kPedestrianMoving, Attribute::kPedestrianStanding, Attribute::kPedestrianSittingLyingDown};
  }
  return {};
}

double truncated_normal(Rng& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  double v;
  do {
    v = rng.normal();
  } while (std::abs(v) > 3.0);
  return sigma * v;
}

// Uniform over the annulus min_r <= r < max_r.
std::pair<double, double> annulus_point(Rng& rng, double min_r, double max_r) {
  const double r = std::sqrt(rng.uniform(min_r * min_r, max_r * max_r));
  const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
  return {r * std::cos(theta), r * std::sin(theta)};
}

ObjectClass pick_class(const std::vector<ClassWeight>& mix, Rng& rng) {
  double total = 0.0;
  for (const auto& cw : mix) total += cw.weight;
  double u = rng.uniform(0.0, total);
  for (const auto& cw : mix) {
    if (u < cw.weight) return cw.cls;
    u -= cw.weight;
  }
  return mix.back().cls;
}

double footprint_radius(const Box3D& b) { return 0.5 * std::hypot(b.w, b.l); }

}  // namespace

void SceneSpec::validate() const {
  if (class_mix.empty()) throw ConfigError("scene spec: class_mix is empty");
  double total = 0.0;
  for (const auto& cw : class_mix) {
    if (!(cw.weight >= 0.0)) throw ConfigError("scene spec: class weights must be >= 0");
    total += cw.weight;
  }
  if (!(total > 0.0)) throw ConfigError("scene spec: class weights sum to zero");
  if (!(min_range >= 0.0 && max_range > min_range)) throw ConfigError("scene spec: bad range");
  if (!(min_speed >= 0.0 && max_speed >= min_speed)) throw ConfigError("scene spec: bad speed range");
  if (min_points_per_object > max_points_per_object) throw ConfigError("scene spec: bad points_per_object");
  if (!(clutter_rate >= 0.0) || !(clutter_half_extent > 0.0)) throw ConfigError("scene spec: bad clutter");
  if (!(position_sigma >= 0.0 && velocity_sigma >= 0.0 && rcs_sigma >= 0.0)) {
    throw ConfigError("scene spec: sigmas must be >= 0");
  }
  if (n_sweeps == 0) throw ConfigError("scene spec: n_sweeps must be >= 1");
  if (!(sweep_interval >= 0.0)) throw ConfigError("scene spec: sweep_interval must be >= 0");
}

void PerturbSpec::validate() const {
  const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(drop_probability) || !prob(attribute_flip_probability)) {
    throw ConfigError("perturb spec: probabilities must lie in [0, 1]");
  }
  if (!(translation_sigma >= 0.0 && scale_sigma >= 0.0 && yaw_sigma >= 0.0 && velocity_sigma >= 0.0 &&
        fp_rate >= 0.0)) {
    throw ConfigError("perturb spec: sigmas and rates must be >= 0");
  }
  if (!(tp_score_max >= tp_score_min) || !(fp_score_max >= fp_score_min)) {
    throw ConfigError("perturb spec: bad score range");
  }
  if (!(fp_max_range > 0.0)) throw ConfigError("perturb spec: fp_max_range must be > 0");
}

std::array<double, 3> class_size(ObjectClass cls) {
  switch (cls) {
    case ObjectClass::kCar: return {1.95, 4.62, 1.73};
    case ObjectClass::kTruck: return {2.52, 6.94, 2.84};
    case ObjectClass::kBus: return {2.94, 11.19, 3.47};
    case ObjectClass::kTrailer: return {2.92, 12.28, 3.87};
    case ObjectClass::kConstructionVehicle: return {2.82, 6.56, 3.20};
    case ObjectClass::kPedestrian: return {0.67, 0.73, 1.77};
    case ObjectClass::kMotorcycle: return {0.77, 2.11, 1.47};
    case ObjectClass::kBicycle: return {0.61, 1.70, 1.29};
    case ObjectClass::kTrafficCone: return {0.41, 0.42, 1.07};
    case ObjectClass::kBarrier: return {2.53, 0.50, 0.98};
  }
  return {1.0, 1.0, 1.0};
}

SceneSample generate_scene(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  SceneSample s;

  for (std::size_t n = 0; n < spec.n_objects; ++n) {
    Box3D box;
    box.cls = pick_class(spec.class_mix, rng);
    const auto [w, l, h] = class_size(box.cls);
    box.w = w;
    box.l = l;
    box.h = h;
    box.cz = h / 2.0;
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_placement_attempts && !placed; ++attempt) {
      const auto [x, y] = annulus_point(rng, spec.min_range, spec.max_range);
      box.cx = x;
      box.cy = y;
      placed = true;
      for (const Box3D& other : s.gt) {
        if (center_distance(box, other) <= footprint_radius(box) + footprint_radius(other)) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw GenerationError("generate_scene: could not place object " + std::to_string(n) + " without overlap after " +
                            std::to_string(spec.max_placement_attempts) + " attempts");
    }
    box.yaw = normalize_yaw(rng.uniform(-std::numbers::pi, std::numbers::pi));
    double speed = 0.0;
    if (!is_static(box.cls)) {
      speed = rng.uniform(spec.min_speed, spec.max_speed);
      if (box.cls == ObjectClass::kPedestrian) speed = std::min(speed, 2.0);
    }
    box.vx = speed * std::cos(box.yaw);
    box.vy = speed * std::sin(box.yaw);
    box.attribute = attribute_for(box.cls, speed);
    s.gt.push_back(box);
  }

  s.cloud.frame_id = "";
  const double extent = spec.clutter_half_extent;
  const double clutter_mean = spec.clutter_rate * 4.0 * extent * extent;
  for (std::size_t sweep = 0; sweep < spec.n_sweeps; ++sweep) {
    const double dt = static_cast<double>(sweep) * spec.sweep_interval;
    for (std::size_t oi = 0; oi < s.gt.size(); ++oi) {
      const Box3D& b = s.gt[oi];
      const double cx = b.cx - b.vx * dt, cy = b.cy - b.vy * dt;
      const double c = std::cos(b.yaw), sn = std::sin(b.yaw);
      const std::size_t count =
          spec.min_points_per_object +
          static_cast<std::size_t>(rng.below(spec.max_points_per_object - spec.min_points_per_object + 1));
      for (std::size_t k = 0; k < count; ++k) {
        const double u = rng.uniform(-b.l / 2.0, b.l / 2.0);  // along heading
        const double v = rng.uniform(-b.w / 2.0, b.w / 2.0);
        RadarPoint p;
        p.x = cx + u * c - v * sn + truncated_normal(rng, spec.position_sigma);
        p.y = cy + u * sn + v * c + truncated_normal(rng, spec.position_sigma);
        p.z = rng.uniform(b.cz - b.h / 2.0, b.cz + b.h / 2.0);
        const double r = std::hypot(p.x, p.y);
        const double rx = r > 0.0 ? p.x / r : 0.0, ry = r > 0.0 ? p.y / r : 0.0;
        const double radial = b.vx * rx + b.vy * ry;
        p.vx = radial * rx + rng.normal(0.0, spec.velocity_sigma);
        p.vy = radial * ry + rng.normal(0.0, spec.velocity_sigma);
        p.rcs = base_rcs(b.cls) + rng.normal(0.0, spec.rcs_sigma);
        p.sweep_offset = dt;
        p.sweep_index = static_cast<std::uint32_t>(sweep);
        s.cloud.points.push_back(p);
        s.point_owner.push_back(static_cast<int>(oi));
      }
    }
    const std::uint64_t clutter = rng.poisson(clutter_mean);
    for (std::uint64_t k = 0; k < clutter; ++k) {
      RadarPoint p;
      p.x = rng.uniform(-extent, extent);
      p.y = rng.uniform(-extent, extent);
      p.z = rng.uniform(0.0, 2.0);
      p.vx = rng.normal(0.0, spec.velocity_sigma);
      p.vy = rng.normal(0.0, spec.velocity_sigma);
      p.rcs = kClutterRcs + rng.normal(0.0, spec.rcs_sigma);
      p.sweep_offset = dt;
      p.sweep_index = static_cast<std::uint32_t>(sweep);
      s.cloud.points.push_back(p);
      s.point_owner.push_back(-1);
    }
  }
  return s;
}

std::vector<Box3D> perturb_to_predictions(const std::vector<Box3D>& gt, const PerturbSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<Box3D> preds;
  for (const Box3D& g : gt) {
    if (rng.bernoulli(spec.drop_probability)) continue;
    Box3D p = g;
    p.cx += rng.normal(0.0, spec.translation_sigma);
    p.cy += rng.normal(0.0, spec.translation_sigma);
    p.w *= std::exp(rng.normal(0.0, spec.scale_sigma));
    p.l *= std::exp(rng.normal(0.0, spec.scale_sigma));
    p.h *= std::exp(rng.normal(0.0, spec.scale_sigma));
    p.yaw = normalize_yaw(p.yaw + rng.normal(0.0, spec.yaw_sigma));
    p.vx += rng.normal(0.0, spec.velocity_sigma);
    p.vy += rng.normal(0.0, spec.velocity_sigma);
    if (p.attribute && rng.bernoulli(spec.attribute_flip_probability)) {
      std::vector<Attribute> others;
      for (Attribute a : attributes_of(p.cls))
        if (a != *p.attribute) others.push_back(a);
      if (!others.empty()) p.attribute = others[rng.below(others.size())];
    }
    p.score = rng.uniform(spec.tp_score_min, spec.tp_score_max);
    preds.push_back(p);
  }

  const std::uint64_t n_fp = rng.poisson(spec.fp_rate);
  for (std::uint64_t k = 0; k < n_fp; ++k) {
    Box3D p;
    p.cls = gt.empty() ? ObjectClass::kCar : gt[rng.below(gt.size())].cls;
    const auto [w, l, h] = class_size(p.cls);
    p.w = w;
    p.l = l;
    p.h = h;
    p.cz = h / 2.0;
    const auto [x, y] = annulus_point(rng, 0.0, spec.fp_max_range);
    p.cx = x;
    p.cy = y;
    p.yaw = normalize_yaw(rng.uniform(-std::numbers::pi, std::numbers::pi));
    p.attribute = attribute_for(p.cls, 0.0);
    p.score = rng.uniform(spec.fp_score_min, spec.fp_score_max);
    preds.push_back(p);
  }
  return preds;
}

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu", index);
  return buf;
}

Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  spec.scene.validate();
  if (spec.perturb) spec.perturb->validate();
  Rng root(seed);
  Dataset d;
  for (std::size_t i = 0; i < spec.frames; ++i) {
    Rng scene_rng = root.fork(2 * i);
    Rng perturb_rng = root.fork(2 * i + 1);
    SceneSpec scene = spec.scene;
    if (!spec.condition_cycle.empty()) scene.condition = spec.condition_cycle[i % spec.condition_cycle.size()];
    SceneSample sample = generate_scene(scene, scene_rng);
    sample.cloud.frame_id = frame_name(i);
    FrameAnnotations ann;
    ann.frame_id = sample.cloud.frame_id;
    ann.condition = scene.condition;
    ann.gt = sample.gt;
    if (spec.perturb) ann.pred = perturb_to_predictions(sample.gt, *spec.perturb, perturb_rng);
    d.clouds.push_back(std::move(sample.cloud));
    d.annotations.push_back(std::move(ann));
  }
  return d;
}

}  // namespace pan
