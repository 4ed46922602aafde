#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pan/backbone.hpp"
#include "pan/pillars.hpp"
#include "pan/rng.hpp"

namespace pan {

struct Timing {
  std::vector<double> samples_ms;
  double median_ms = 0.0;
};

// Runs fn `repeats` times and reports the median wall time.
Timing time_median(const std::function<void()>& fn, std::size_t repeats);

struct BackboneBench {
  Timing timing;
  WorkReport work;
};

BackboneBench bench_backbone(const PointCloud& pc, const PanParams& params, const PanConfig& cfg,
                             std::size_t repeats);

// One return in each of round(fill * H * W) distinct random cells.
PointCloud occupancy_cloud(const PillarConfig& cfg, double fill, Rng& rng);

}  // namespace pan
