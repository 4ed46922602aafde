#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace pan {

enum class ObjectClass {
  kCar,
  kTruck,
  kBus,
  kTrailer,
  kConstructionVehicle,
  kPedestrian,
  kMotorcycle,
  kBicycle,
  kTrafficCone,
  kBarrier,
};

inline constexpr std::array<ObjectClass, 10> kAllClasses = {
    ObjectClass::kCar,        ObjectClass::kTruck,      ObjectClass::kBus,     ObjectClass::kTrailer,
    ObjectClass::kConstructionVehicle, ObjectClass::kPedestrian, ObjectClass::kMotorcycle, ObjectClass::kBicycle,
    ObjectClass::kTrafficCone, ObjectClass::kBarrier,
};

enum class Attribute {
  kVehicleMoving,
  kVehicleParked,
  kVehicleStopped,
  kCycleWithRider,
  kCycleWithoutRider,
  kPedestrianMoving,
  kPedestrianStanding,
  kPedestrianSittingLyingDown,
  kUnknown,  // any string outside the vocabulary; never counts as correct
};

enum class Condition { kDay, kRain, kNight };

std::string_view to_string(ObjectClass c);
std::string_view to_string(Attribute a);
std::string_view to_string(Condition c);
std::optional<ObjectClass> parse_class(std::string_view s);
Attribute parse_attribute(std::string_view s);
std::optional<Condition> parse_condition(std::string_view s);

// Wraps an angle into (-pi, pi].
double normalize_yaw(double yaw);

struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double w = 1.0, l = 1.0, h = 1.0;
  double yaw = 0.0;
  double vx = 0.0, vy = 0.0;
  ObjectClass cls = ObjectClass::kCar;
  std::optional<Attribute> attribute;
  double score = 0.0;  // predictions only

  double range() const;  // BEV distance from the ego origin
  bool operator==(const Box3D&) const = default;
};

struct FrameAnnotations {
  std::string frame_id;
  Condition condition = Condition::kDay;
  std::vector<Box3D> gt;
  std::vector<Box3D> pred;
};

struct EvalConfig {
  std::vector<double> match_thresholds_m = {0.5, 1.0, 2.0, 4.0};
  // Half-open band [min, max) on BEV distance from ego.
  std::array<double, 2> range_filter = {0.0, 50.0};
  double min_recall = 0.1;
  double min_precision = 0.1;
  double tp_threshold_m = 2.0;

  void validate() const;
};

// --- matching -------------------------------------------------------------

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (pred_idx, gt_idx) in processing order
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_gt;
};

double center_distance(const Box3D& a, const Box3D& b);

// Greedy matching of one frame and one class. Predictions are processed by
// descending score (stable on index); each takes the nearest unmatched GT
// with center distance strictly below the threshold, ties to the lower GT index.
MatchResult match_frame(std::span<const Box3D> gt, std::span<const Box3D> pred, double threshold_m);

// --- AP ---------------------------------------------------------------------

struct ScoredDetection {
  double score = 0.0;
  bool true_positive = false;
};

// All detections of one class at one threshold, pooled over frames and sorted
// by descending score, plus the matched (pred, gt) box pairs.
struct ClassAccumulation {
  std::size_t n_gt = 0;
  std::vector<ScoredDetection> detections;
  std::vector<std::pair<Box3D, Box3D>> matched;  // (pred, gt)
};

ClassAccumulation accumulate(std::span<const FrameAnnotations> frames, ObjectClass cls, double threshold_m);

// 101-point interpolated precision-recall, devkit style: precision is
// interpolated at recall = 0, 0.01, ..., 1 (zero beyond the last recall),
// points at recall <= min_recall are dropped, min_precision is subtracted
// and clipped at zero, and the mean is divided by 1 - min_precision.
// Returns nullopt when the class has no ground truth.
std::optional<double> average_precision(const ClassAccumulation& acc, const EvalConfig& cfg);
std::optional<double> average_precision(std::span<const FrameAnnotations> frames, ObjectClass cls,
                                        double threshold_m, const EvalConfig& cfg);

// --- TP errors --------------------------------------------------------------

enum TpMetric : std::size_t { kATE = 0, kASE, kAOE, kAVE, kAAE };
inline constexpr std::array<std::string_view, 5> kTpMetricNames = {"mATE", "mASE", "mAOE", "mAVE", "mAAE"};

// NaN marks a metric that does not apply to the class.
using TpErrors = std::array<double, 5>;

double scale_iou(const Box3D& a, const Box3D& b);
// Smallest absolute yaw difference; period pi for barriers, 2*pi otherwise.
double yaw_difference(const Box3D& pred, const Box3D& gt, ObjectClass cls);
bool tp_metric_applies(ObjectClass cls, TpMetric metric);

// Mean error over the matched pairs. Applicable metrics with no usable
// pairs are 1. AAE skips pairs whose GT has no attribute.
TpErrors tp_errors(std::span<const std::pair<Box3D, Box3D>> matched, ObjectClass cls);

// --- NDS --------------------------------------------------------------------

// 0.5 * mAP + 0.1 * sum(1 - min(1, e)) over the five TP errors.
double nds(double mean_ap, const TpErrors& mean_tp);

// --- reports ----------------------------------------------------------------

struct ClassMetrics {
  ObjectClass cls = ObjectClass::kCar;
  std::size_t n_gt = 0;
  std::size_t n_pred = 0;
  std::vector<double> ap_per_threshold;
  std::vector<std::size_t> tp_per_threshold;
  std::vector<std::size_t> fp_per_threshold;
  double ap = 0.0;
  TpErrors tp{};
};

struct MetricsReport {
  std::string split;
  bool empty = false;  // no frames or no GT in the split; metrics are meaningless
  std::size_t n_frames = 0;
  std::size_t n_gt = 0;
  std::size_t n_pred = 0;
  std::vector<double> thresholds;
  std::vector<ClassMetrics> classes;  // classes with at least one GT box
  double mean_ap = 0.0;
  TpErrors mean_tp{};
  double nds = 0.0;
};

struct Split {
  std::string name = "all";
  std::optional<Condition> condition;  // nullopt keeps every frame
  std::array<double, 2> range = {0.0, 50.0};
};

// Frames filtered by condition, boxes by the split's range band, then
// evaluated independently.
MetricsReport evaluate(std::span<const FrameAnnotations> frames, const EvalConfig& cfg, const Split& split);
MetricsReport evaluate(std::span<const FrameAnnotations> frames, const EvalConfig& cfg);

nlohmann::ordered_json to_json(const MetricsReport& report);
// Aligned text table, one row per report, columns NDS mAP mATE mASE mAOE
// mAVE mAAE. NDS and mAP are shown x100.
std::string format_table(std::span<const MetricsReport> reports);

}  // namespace pan
