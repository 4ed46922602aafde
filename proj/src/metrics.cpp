#include "pan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "pan/errors.hpp"

namespace pan {

namespace {

constexpr std::array<std::string_view, 10> kClassNames = {
    "car", "truck", "bus", "trailer", "construction_vehicle", "pedestrian", "motorcycle", "bicycle",
    "traffic_cone", "barrier",
};

constexpr std::array<std::string_view, 9> kAttributeNames = {
    "vehicle.moving",      "vehicle.parked",      "vehicle.stopped",
    "cycle.with_rider",    "cycle.without_rider", "pedestrian.moving",
    "pedestrian.standing", "pedestrian.sitting_lying_down", "unknown",
};

constexpr std::array<std::string_view, 3> kConditionNames = {"day", "rain", "night"};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string_view to_string(ObjectClass c) { return kClassNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Attribute a) { return kAttributeNames[static_cast<std::size_t>(a)]; }
std::string_view to_string(Condition c) { return kConditionNames[static_cast<std::size_t>(c)]; }

std::optional<ObjectClass> parse_class(std::string_view s) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i)
    if (kClassNames[i] == s) return static_cast<ObjectClass>(i);
  return std::nullopt;
}

Attribute parse_attribute(std::string_view s) {
  for (std::size_t i = 0; i + 1 < kAttributeNames.size(); ++i)
    if (kAttributeNames[i] == s) return static_cast<Attribute>(i);
  return Attribute::kUnknown;
}

std::optional<Condition> parse_condition(std::string_view s) {
  for (std::size_t i = 0; i < kConditionNames.size(); ++i)
    if (kConditionNames[i] == s) return static_cast<Condition>(i);
  return std::nullopt;
}

double normalize_yaw(double yaw) {
  const double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(yaw, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

double Box3D::range() const { return std::hypot(cx, cy); }

void EvalConfig::validate() const {
  if (match_thresholds_m.empty()) throw ConfigError("eval config: no match thresholds");
  for (std::size_t i = 0; i < match_thresholds_m.size(); ++i) {
    if (!(match_thresholds_m[i] > 0.0)) throw ConfigError("eval config: thresholds must be positive");
    if (i && !(match_thresholds_m[i] > match_thresholds_m[i - 1])) {
      throw ConfigError("eval config: thresholds must be ascending");
    }
  }
  if (std::find(match_thresholds_m.begin(), match_thresholds_m.end(), tp_threshold_m) == match_thresholds_m.end()) {
    throw ConfigError("eval config: tp_threshold_m must be one of the match thresholds");
  }
  if (!(range_filter[1] > range_filter[0]) || range_filter[0] < 0.0) throw ConfigError("eval config: bad range_filter");
  if (!(min_recall >= 0.0 && min_recall < 1.0) || !(min_precision >= 0.0 && min_precision < 1.0)) {
    throw ConfigError("eval config: min_recall and min_precision must lie in [0, 1)");
  }
}

double center_distance(const Box3D& a, const Box3D& b) { return std::hypot(a.cx - b.cx, a.cy - b.cy); }

MatchResult match_frame(std::span<const Box3D> gt, std::span<const Box3D> pred, double threshold_m) {
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pred[a].score > pred[b].score; });
  std::vector<bool> taken(gt.size(), false);
  MatchResult r;
  for (std::size_t pi : order) {
    std::size_t best = gt.size();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t gi = 0; gi < gt.size(); ++gi) {
      if (taken[gi]) continue;
      const double d = center_distance(pred[pi], gt[gi]);
      if (d < best_dist) {
        best_dist = d;
        best = gi;
      }
    }
    if (best < gt.size() && best_dist < threshold_m) {
      taken[best] = true;
      r.matches.emplace_back(pi, best);
    } else {
      r.unmatched_pred.push_back(pi);
    }
  }
  for (std::size_t gi = 0; gi < gt.size(); ++gi)
    if (!taken[gi]) r.unmatched_gt.push_back(gi);
  return r;
}

ClassAccumulation accumulate(std::span<const FrameAnnotations> frames, ObjectClass cls, double threshold_m) {
  ClassAccumulation acc;
  struct Entry {
    double score;
    std::size_t frame, pred;
    bool tp;
  };
  std::vector<Entry> entries;
  std::vector<std::pair<std::size_t, std::pair<Box3D, Box3D>>> pairs;  // keyed by entry index
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::vector<Box3D> gt, pred;
    for (const Box3D& b : frames[f].gt)
      if (b.cls == cls) gt.push_back(b);
    for (const Box3D& b : frames[f].pred)
      if (b.cls == cls) pred.push_back(b);
    acc.n_gt += gt.size();
    const MatchResult m = match_frame(gt, pred, threshold_m);
    std::vector<int> gt_of(pred.size(), -1);
    for (const auto& [p, g] : m.matches) gt_of[p] = static_cast<int>(g);
    for (std::size_t p = 0; p < pred.size(); ++p) {
      entries.push_back({pred[p].score, f, p, gt_of[p] >= 0});
      if (gt_of[p] >= 0) pairs.push_back({entries.size() - 1, {pred[p], gt[static_cast<std::size_t>(gt_of[p])]}});
    }
  }
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entries[a].score > entries[b].score; });
  acc.detections.reserve(order.size());
  for (std::size_t i : order) acc.detections.push_back({entries[i].score, entries[i].tp});
  acc.matched.reserve(pairs.size());
  for (auto& p : pairs) acc.matched.push_back(std::move(p.second));
  return acc;
}

namespace {

// numpy.interp semantics for non-decreasing xp: left value fp[0], right
// value `right`, and the segment starting at the last xp[j] <= x.
double interp(double x, const std::vector<double>& xp, const std::vector<double>& fp, double right) {
  if (x > xp.back()) return right;
  if (x < xp.front()) return fp.front();
  const auto it = std::upper_bound(xp.begin(), xp.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - xp.begin()) - 1;
  if (j == xp.size() - 1 || xp[j] == x) return fp[j];
  const double slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
  return slope * (x - xp[j]) + fp[j];
}

}  // namespace

std::optional<double> average_precision(const ClassAccumulation& acc, const EvalConfig& cfg) {
  if (acc.n_gt == 0) return std::nullopt;
  constexpr std::size_t kSamples = 101;
  std::vector<double> precision(kSamples, 0.0);
  if (!acc.detections.empty()) {
    std::vector<double> rec, prec;
    double tp = 0.0, fp = 0.0;
    for (const auto& d : acc.detections) {
      (d.true_positive ? tp : fp) += 1.0;
      prec.push_back(tp / (tp + fp));
      rec.push_back(tp / static_cast<double>(acc.n_gt));
    }
    for (std::size_t i = 0; i < kSamples; ++i)
      precision[i] = interp(static_cast<double>(i) / 100.0, rec, prec, 0.0);
  }
  const auto first = static_cast<std::size_t>(std::lround(100.0 * cfg.min_recall)) + 1;
  if (first >= kSamples) return 0.0;
  double total = 0.0;
  for (std::size_t i = first; i < kSamples; ++i)
    total += std::max(0.0, precision[i] - cfg.min_precision) / (1.0 - cfg.min_precision);
  return total / static_cast<double>(kSamples - first);
}

std::optional<double> average_precision(std::span<const FrameAnnotations> frames, ObjectClass cls,
                                        double threshold_m, const EvalConfig& cfg) {
  return average_precision(accumulate(frames, cls, threshold_m), cfg);
}

double scale_iou(const Box3D& a, const Box3D& b) {
  const double inter = std::min(a.w, b.w) * std::min(a.l, b.l) * std::min(a.h, b.h);
  const double uni = a.w * a.l * a.h + b.w * b.l * b.h - inter;
  return inter / uni;
}

double yaw_difference(const Box3D& pred, const Box3D& gt, ObjectClass cls) {
  const double period = cls == ObjectClass::kBarrier ? std::numbers::pi : 2.0 * std::numbers::pi;
  double d = std::fmod(std::abs(pred.yaw - gt.yaw), period);
  return std::min(d, period - d);
}

bool tp_metric_applies(ObjectClass cls, TpMetric metric) {
  if (cls == ObjectClass::kTrafficCone) return metric != kAOE && metric != kAAE;
  if (cls == ObjectClass::kBarrier) return metric != kAAE;
  return true;
}

TpErrors tp_errors(std::span<const std::pair<Box3D, Box3D>> matched, ObjectClass cls) {
  std::array<double, 5> sums{};
  std::array<std::size_t, 5> counts{};
  for (const auto& [pred, gt] : matched) {
    sums[kATE] += center_distance(pred, gt);
    sums[kASE] += 1.0 - scale_iou(pred, gt);
    sums[kAOE] += yaw_difference(pred, gt, cls);
    sums[kAVE] += std::hypot(pred.vx - gt.vx, pred.vy - gt.vy);
    for (std::size_t m : {kATE, kASE, kAOE, kAVE}) ++counts[m];
    if (gt.attribute) {
      const bool correct = pred.attribute && *pred.attribute == *gt.attribute && *gt.attribute != Attribute::kUnknown;
      sums[kAAE] += correct ? 0.0 : 1.0;
      ++counts[kAAE];
    }
  }
  TpErrors out{};
  for (std::size_t m = 0; m < 5; ++m) {
    if (!tp_metric_applies(cls, static_cast<TpMetric>(m))) {
      out[m] = kNaN;
    } else {
      out[m] = counts[m] ? sums[m] / static_cast<double>(counts[m]) : 1.0;
    }
  }
  return out;
}

double nds(double mean_ap, const TpErrors& mean_tp) {
  if (!std::isfinite(mean_ap)) throw ParameterError("nds: mAP must be finite");
  double tp_score = 0.0;
  for (double e : mean_tp) {
    if (!std::isfinite(e)) throw ParameterError("nds: TP errors must be finite");
    tp_score += 1.0 - std::min(1.0, e);
  }
  return 0.5 * mean_ap + 0.1 * tp_score;
}

namespace {

FrameAnnotations filter_range(const FrameAnnotations& f, std::array<double, 2> band) {
  FrameAnnotations out;
  out.frame_id = f.frame_id;
  out.condition = f.condition;
  const auto in_band = [&](const Box3D& b) {
    const double r = b.range();
    return r >= band[0] && r < band[1];
  };
  std::copy_if(f.gt.begin(), f.gt.end(), std::back_inserter(out.gt), in_band);
  std::copy_if(f.pred.begin(), f.pred.end(), std::back_inserter(out.pred), in_band);
  return out;
}

}  // namespace

MetricsReport evaluate(std::span<const FrameAnnotations> frames, const EvalConfig& cfg, const Split& split) {
  cfg.validate();
  if (!(split.range[1] > split.range[0])) throw ConfigError("evaluate: empty range band");
  std::vector<FrameAnnotations> kept;
  for (const auto& f : frames) {
    if (split.condition && f.condition != *split.condition) continue;
    kept.push_back(filter_range(f, split.range));
  }

  MetricsReport report;
  report.split = split.name;
  report.thresholds = cfg.match_thresholds_m;
  report.n_frames = kept.size();
  for (const auto& f : kept) {
    report.n_gt += f.gt.size();
    report.n_pred += f.pred.size();
  }
  if (kept.empty() || report.n_gt == 0) {
    report.empty = true;
    report.mean_ap = kNaN;
    report.mean_tp.fill(kNaN);
    report.nds = kNaN;
    return report;
  }

  for (ObjectClass cls : kAllClasses) {
    ClassMetrics cm;
    cm.cls = cls;
    for (const auto& f : kept)
      cm.n_pred += static_cast<std::size_t>(std::count_if(f.pred.begin(), f.pred.end(),
                                                          [&](const Box3D& b) { return b.cls == cls; }));
    for (double th : cfg.match_thresholds_m) {
      const ClassAccumulation acc = accumulate(kept, cls, th);
      cm.n_gt = acc.n_gt;
      const std::size_t tp = static_cast<std::size_t>(std::count_if(
          acc.detections.begin(), acc.detections.end(), [](const ScoredDetection& d) { return d.true_positive; }));
      cm.tp_per_threshold.push_back(tp);
      cm.fp_per_threshold.push_back(acc.detections.size() - tp);
      cm.ap_per_threshold.push_back(average_precision(acc, cfg).value_or(kNaN));
      if (th == cfg.tp_threshold_m) cm.tp = tp_errors(acc.matched, cls);
    }
    if (cm.n_gt == 0) continue;
    cm.ap = std::accumulate(cm.ap_per_threshold.begin(), cm.ap_per_threshold.end(), 0.0) /
            static_cast<double>(cm.ap_per_threshold.size());
    report.classes.push_back(std::move(cm));
  }

  double ap_sum = 0.0;
  for (const auto& cm : report.classes) ap_sum += cm.ap;
  report.mean_ap = ap_sum / static_cast<double>(report.classes.size());
  for (std::size_t m = 0; m < 5; ++m) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& cm : report.classes) {
      if (std::isnan(cm.tp[m])) continue;
      s += cm.tp[m];
      ++n;
    }
    // A metric with no applicable class (e.g. only traffic cones) counts as worst case.
    report.mean_tp[m] = n ? s / static_cast<double>(n) : 1.0;
  }
  report.nds = nds(report.mean_ap, report.mean_tp);
  return report;
}

MetricsReport evaluate(std::span<const FrameAnnotations> frames, const EvalConfig& cfg) {
  return evaluate(frames, cfg, Split{"all", std::nullopt, cfg.range_filter});
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["split"] = r.split;
  j["empty"] = r.empty;
  j["n_frames"] = r.n_frames;
  j["n_gt"] = r.n_gt;
  j["n_pred"] = r.n_pred;
  j["thresholds_m"] = r.thresholds;
  j["NDS"] = number_or_null(r.nds);
  j["mAP"] = number_or_null(r.mean_ap);
  for (std::size_t m = 0; m < 5; ++m) j[std::string(kTpMetricNames[m])] = number_or_null(r.mean_tp[m]);
  auto& classes = j["classes"] = nlohmann::ordered_json::array();
  for (const auto& cm : r.classes) {
    nlohmann::ordered_json c;
    c["class"] = to_string(cm.cls);
    c["n_gt"] = cm.n_gt;
    c["n_pred"] = cm.n_pred;
    c["AP"] = number_or_null(cm.ap);
    auto& per = c["AP_per_threshold"] = nlohmann::ordered_json::array();
    for (double a : cm.ap_per_threshold) per.push_back(number_or_null(a));
    c["tp_per_threshold"] = cm.tp_per_threshold;
    c["fp_per_threshold"] = cm.fp_per_threshold;
    static constexpr std::array<const char*, 5> kClassTpNames = {"ATE", "ASE", "AOE", "AVE", "AAE"};
    for (std::size_t m = 0; m < 5; ++m) c[kClassTpNames[m]] = number_or_null(cm.tp[m]);
    classes.push_back(std::move(c));
  }
  return j;
}

std::string format_table(std::span<const MetricsReport> reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %7s %7s %7s %7s %7s %7s %7s\n", "Split", "NDS", "mAP", "mATE", "mASE",
                "mAOE", "mAVE", "mAAE");
  out += line;
  for (const auto& r : reports) {
    if (r.empty) {
      std::snprintf(line, sizeof line, "%-16s %7s\n", r.split.c_str(), "(empty)");
    } else {
      std::snprintf(line, sizeof line, "%-16s %7.1f %7.1f %7.3f %7.3f %7.3f %7.3f %7.3f\n", r.split.c_str(),
                    100.0 * r.nds, 100.0 * r.mean_ap, r.mean_tp[kATE], r.mean_tp[kASE], r.mean_tp[kAOE],
                    r.mean_tp[kAVE], r.mean_tp[kAAE]);
    }
    out += line;
  }
  return out;
}

}  // namespace pan
