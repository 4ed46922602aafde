#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pan/layers.hpp"
#include "pan/tensor.hpp"

namespace pan {

struct RadarPoint {
  double x = 0.0;  // m, ego frame
  double y = 0.0;
  double z = 0.0;  // carried but never used as a pillar feature
  double vx = 0.0;  // m/s, ego-motion compensated
  double vy = 0.0;
  double rcs = 0.0;           // dB
  double sweep_offset = 0.0;  // s, 0 for the current sweep
  std::uint32_t sweep_index = 0;

  bool operator==(const RadarPoint&) const = default;
};

struct PointCloud {
  std::string frame_id;
  std::vector<RadarPoint> points;
};

// Per-point feature layout fed to the pillar feature net.
inline constexpr std::size_t kRawPointFeatures = 10;  // x y vx vy rcs dt xc yc xp yp

struct PillarConfig {
  double x_min = -50.0;
  double x_max = 50.0;
  double y_min = -50.0;
  double y_max = 50.0;
  double pillar_size = 0.78125;
  std::size_t max_points_per_pillar = 20;
  std::size_t raw_channels = kRawPointFeatures;
  std::size_t out_channels = 32;

  // Throws ConfigError when ranges are empty, extents are not an integral
  // number of pillars, or raw_channels differs from kRawPointFeatures.
  void validate() const;
  // Grid columns follow x, rows follow y.
  std::size_t width() const;
  std::size_t height() const;
};

struct GridIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const GridIndex&) const = default;
};

// Sparse pseudo-image: dense [H, W, C] storage plus occupancy mask.
struct PillarGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  Tensor data;                     // [H, W, C]
  std::vector<std::uint8_t> mask;  // H*W, row-major, 1 = non-empty
  std::size_t pillar_count = 0;

  static PillarGrid empty(std::size_t h, std::size_t w, std::size_t c);
  bool occupied(std::size_t row, std::size_t col) const { return mask[row * width + col] != 0; }
  bool operator==(const PillarGrid&) const = default;
};

struct TokenBatch {
  Tensor tokens;                  // [P, C]
  std::vector<GridIndex> coords;  // length P

  std::size_t size() const { return coords.size(); }
};

// Pillar feature net: per-point linear -> batch norm -> relu, then max over
// the points in each pillar.
struct PfnParams {
  LinearParams linear;  // [kRawPointFeatures, C]
  BatchNorm norm;       // [C]
};

PfnParams init_pfn(const PillarConfig& cfg, Rng& rng);

// Grid cell of a point, or false when the point lies outside the range.
bool pillar_of(const RadarPoint& p, const PillarConfig& cfg, GridIndex& out);

// In-range points grouped by pillar and truncated to max_points_per_pillar.
// Within a pillar, points are ordered by distance to the pillar center with
// ties broken by (x, y, sweep_index, ...), and only the first
// max_points_per_pillar are kept. Pillars are in row-major order.
struct PillarAssignment {
  std::vector<GridIndex> cells;
  std::vector<std::vector<RadarPoint>> points;
};
PillarAssignment assign_pillars(const PointCloud& pc, const PillarConfig& cfg);

// Number of non-empty pillars without running the feature net.
std::size_t count_pillars(const PointCloud& pc, const PillarConfig& cfg);

// The [N, kRawPointFeatures] augmented features of an assignment, pillar by pillar.
Tensor augmented_point_features(const PillarAssignment& a, const PillarConfig& cfg);

PillarGrid pillarize(const PointCloud& pc, const PillarConfig& cfg, PfnParams& pfn, bool training);
PillarGrid pillarize(const PointCloud& pc, const PillarConfig& cfg, const PfnParams& pfn);

TokenBatch gather(const PillarGrid& grid);
// Throws IndexError on duplicate or out-of-range coordinates.
PillarGrid scatter(const TokenBatch& tb, std::size_t height, std::size_t width);

}  // namespace pan
