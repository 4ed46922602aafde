#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pan/metrics.hpp"
#include "pan/pillars.hpp"
#include "pan/rng.hpp"

namespace pan {

struct ClassWeight {
  ObjectClass cls = ObjectClass::kCar;
  double weight = 1.0;
};

// Desk-scale stand-in for a radar scene: boxes on a flat ground plane,
// returns sampled on their footprints, uniform clutter, and constant-velocity
// history sweeps.
struct SceneSpec {
  std::size_t n_objects = 8;
  std::vector<ClassWeight> class_mix = {{ObjectClass::kCar, 0.5},
                                        {ObjectClass::kPedestrian, 0.2},
                                        {ObjectClass::kTruck, 0.1},
                                        {ObjectClass::kBicycle, 0.1},
                                        {ObjectClass::kBarrier, 0.1}};
  double min_range = 2.0;  // BEV distance of object centers from ego, m
  double max_range = 48.0;
  double min_speed = 0.0;  // m/s
  double max_speed = 12.0;
  std::size_t min_points_per_object = 2;  // per sweep
  std::size_t max_points_per_object = 6;
  double clutter_rate = 0.0005;    // points per m^2 per sweep
  double clutter_half_extent = 50.0;  // clutter covers [-e, e]^2
  double position_sigma = 0.05;    // m, truncated at 3 sigma
  double velocity_sigma = 0.1;     // m/s
  double rcs_sigma = 1.0;          // dB
  std::size_t n_sweeps = 6;
  double sweep_interval = 0.075;   // s between sweeps
  Condition condition = Condition::kDay;
  std::size_t max_placement_attempts = 1000;

  void validate() const;
};

struct PerturbSpec {
  double translation_sigma = 0.0;  // m, per BEV axis
  double scale_sigma = 0.0;        // log-normal factor on each size
  double yaw_sigma = 0.0;          // rad
  double velocity_sigma = 0.0;     // m/s, per axis
  double drop_probability = 0.0;
  double fp_rate = 0.0;            // expected false positives per frame
  double attribute_flip_probability = 0.0;
  // Scores are uniform in these ranges for kept boxes and false positives.
  double tp_score_min = 0.5;
  double tp_score_max = 1.0;
  double fp_score_min = 0.0;
  double fp_score_max = 0.5;
  double fp_max_range = 50.0;

  void validate() const;
};

struct SceneSample {
  PointCloud cloud;
  std::vector<Box3D> gt;
  std::vector<int> point_owner;  // index into gt per point, -1 for clutter
};

// Typical (w, l, h) of a class, m.
std::array<double, 3> class_size(ObjectClass cls);

// Throws GenerationError when an object cannot be placed without BEV overlap.
SceneSample generate_scene(const SceneSpec& spec, Rng& rng);

std::vector<Box3D> perturb_to_predictions(const std::vector<Box3D>& gt, const PerturbSpec& spec, Rng& rng);

// Multi-frame generation as driven by the `gen` command.
struct DatasetSpec {
  std::size_t frames = 1;
  SceneSpec scene;
  std::optional<PerturbSpec> perturb;
  std::vector<Condition> condition_cycle;  // when set, frame i takes cycle[i % size]
};

struct Dataset {
  std::vector<PointCloud> clouds;
  std::vector<FrameAnnotations> annotations;
};

std::string frame_name(std::size_t index);
Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace pan
