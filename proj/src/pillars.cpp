#include "pan/pillars.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "pan/errors.hpp"

namespace pan {

namespace {

std::size_t integral_cells(double lo, double hi, double size, const char* axis) {
  const double cells = (hi - lo) / size;
  const double rounded = std::round(cells);
  if (rounded < 1.0 || std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells)) {
    throw ConfigError(std::string("pillar config: ") + axis + " extent is not an integral number of pillars");
  }
  return static_cast<std::size_t>(rounded);
}

auto canonical_key(const RadarPoint& p, double cx, double cy) {
  const double d2 = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
  return std::make_tuple(d2, p.x, p.y, p.sweep_index, p.vx, p.vy, p.rcs, p.sweep_offset, p.z);
}

}  // namespace

void PillarConfig::validate() const {
  if (!(pillar_size > 0.0) || !std::isfinite(pillar_size)) throw ConfigError("pillar config: pillar_size must be > 0");
  if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("pillar config: empty range");
  integral_cells(x_min, x_max, pillar_size, "x");
  integral_cells(y_min, y_max, pillar_size, "y");
  if (max_points_per_pillar == 0) throw ConfigError("pillar config: max_points_per_pillar must be >= 1");
  if (raw_channels != kRawPointFeatures) {
    throw ConfigError("pillar config: raw_channels must be " + std::to_string(kRawPointFeatures));
  }
  if (out_channels == 0) throw ConfigError("pillar config: out_channels must be >= 1");
}

std::size_t PillarConfig::width() const { return integral_cells(x_min, x_max, pillar_size, "x"); }
std::size_t PillarConfig::height() const { return integral_cells(y_min, y_max, pillar_size, "y"); }

PillarGrid PillarGrid::empty(std::size_t h, std::size_t w, std::size_t c) {
  PillarGrid g;
  g.height = h;
  g.width = w;
  g.channels = c;
  g.data = Tensor({h, w, c});
  g.mask.assign(h * w, 0);
  return g;
}

PfnParams init_pfn(const PillarConfig& cfg, Rng& rng) {
  return {init_linear(kRawPointFeatures, cfg.out_channels, rng), init_batch_norm(cfg.out_channels)};
}

bool pillar_of(const RadarPoint& p, const PillarConfig& cfg, GridIndex& out) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  if (p.x < cfg.x_min || p.x >= cfg.x_max || p.y < cfg.y_min || p.y >= cfg.y_max) return false;
  const auto col = static_cast<std::size_t>(std::floor((p.x - cfg.x_min) / cfg.pillar_size));
  const auto row = static_cast<std::size_t>(std::floor((p.y - cfg.y_min) / cfg.pillar_size));
  if (col >= cfg.width() || row >= cfg.height()) return false;
  out = {row, col};
  return true;
}

PillarAssignment assign_pillars(const PointCloud& pc, const PillarConfig& cfg) {
  cfg.validate();
  std::map<GridIndex, std::vector<RadarPoint>> buckets;
  for (const RadarPoint& p : pc.points) {
    GridIndex idx;
    if (pillar_of(p, cfg, idx)) buckets[idx].push_back(p);
  }
  PillarAssignment a;
  a.cells.reserve(buckets.size());
  a.points.reserve(buckets.size());
  for (auto& [idx, pts] : buckets) {
    const double cx = cfg.x_min + (static_cast<double>(idx.col) + 0.5) * cfg.pillar_size;
    const double cy = cfg.y_min + (static_cast<double>(idx.row) + 0.5) * cfg.pillar_size;
    std::sort(pts.begin(), pts.end(), [&](const RadarPoint& l, const RadarPoint& r) {
      return canonical_key(l, cx, cy) < canonical_key(r, cx, cy);
    });
    if (pts.size() > cfg.max_points_per_pillar) pts.resize(cfg.max_points_per_pillar);
    a.cells.push_back(idx);
    a.points.push_back(std::move(pts));
  }
  return a;
}

std::size_t count_pillars(const PointCloud& pc, const PillarConfig& cfg) {
  cfg.validate();
  const std::size_t w = cfg.width();
  std::vector<std::uint8_t> seen(cfg.height() * w, 0);
  std::size_t count = 0;
  for (const RadarPoint& p : pc.points) {
    GridIndex idx;
    if (!pillar_of(p, cfg, idx)) continue;
    auto& s = seen[idx.row * w + idx.col];
    if (!s) {
      s = 1;
      ++count;
    }
  }
  return count;
}

Tensor augmented_point_features(const PillarAssignment& a, const PillarConfig& cfg) {
  std::size_t n = 0;
  for (const auto& pts : a.points) n += pts.size();
  Tensor feats({n, kRawPointFeatures});
  std::size_t r = 0;
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    const auto& pts = a.points[k];
    double mx = 0.0, my = 0.0;
    for (const RadarPoint& p : pts) {
      mx += p.x;
      my += p.y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    const double cx = cfg.x_min + (static_cast<double>(a.cells[k].col) + 0.5) * cfg.pillar_size;
    const double cy = cfg.y_min + (static_cast<double>(a.cells[k].row) + 0.5) * cfg.pillar_size;
    for (const RadarPoint& p : pts) {
      auto row = feats.row(r++);
      row[0] = p.x;
      row[1] = p.y;
      row[2] = p.vx;
      row[3] = p.vy;
      row[4] = p.rcs;
      row[5] = p.sweep_offset;
      row[6] = p.x - mx;
      row[7] = p.y - my;
      row[8] = p.x - cx;
      row[9] = p.y - cy;
    }
  }
  return feats;
}

namespace {

template <typename Norm>
PillarGrid pillarize_impl(const PointCloud& pc, const PillarConfig& cfg, const PfnParams& pfn, Norm&& norm) {
  const PillarAssignment a = assign_pillars(pc, cfg);
  const std::size_t c = cfg.out_channels;
  if (pfn.linear.in_dim() != kRawPointFeatures || pfn.linear.out_dim() != c) {
    throw DimensionError("pillarize: PFN weight must be [" + std::to_string(kRawPointFeatures) + ", " +
                         std::to_string(c) + "]");
  }
  PillarGrid grid = PillarGrid::empty(cfg.height(), cfg.width(), c);
  if (a.cells.empty()) return grid;

  const Tensor point_feats = relu(norm(linear(augmented_point_features(a, cfg), pfn.linear)));
  std::size_t r = 0;
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    const GridIndex idx = a.cells[k];
    double* cell = &grid.data.at(idx.row, idx.col, 0);
    for (std::size_t i = 0; i < a.points[k].size(); ++i, ++r) {
      const auto f = point_feats.row(r);
      for (std::size_t ch = 0; ch < c; ++ch) cell[ch] = i == 0 ? f[ch] : std::max(cell[ch], f[ch]);
    }
    grid.mask[idx.row * grid.width + idx.col] = 1;
  }
  grid.pillar_count = a.cells.size();
  return grid;
}

}  // namespace

PillarGrid pillarize(const PointCloud& pc, const PillarConfig& cfg, PfnParams& pfn, bool training) {
  return pillarize_impl(pc, cfg, pfn, [&](const Tensor& x) { return batch_norm(x, pfn.norm, training); });
}

PillarGrid pillarize(const PointCloud& pc, const PillarConfig& cfg, const PfnParams& pfn) {
  return pillarize_impl(pc, cfg, pfn, [&](const Tensor& x) { return batch_norm(x, pfn.norm); });
}

TokenBatch gather(const PillarGrid& grid) {
  TokenBatch tb;
  tb.coords.reserve(grid.pillar_count);
  for (std::size_t i = 0; i < grid.height; ++i)
    for (std::size_t j = 0; j < grid.width; ++j)
      if (grid.occupied(i, j)) tb.coords.push_back({i, j});
  tb.tokens = Tensor({tb.coords.size(), grid.channels});
  for (std::size_t k = 0; k < tb.coords.size(); ++k) {
    const double* src = &grid.data.at(tb.coords[k].row, tb.coords[k].col, 0);
    std::copy(src, src + grid.channels, tb.tokens.row(k).begin());
  }
  return tb;
}

PillarGrid scatter(const TokenBatch& tb, std::size_t height, std::size_t width) {
  if (tb.tokens.rank() != 2 || tb.tokens.dim(0) != tb.coords.size()) {
    throw DimensionError("scatter: tokens must be [P, C] with P == coords.size()");
  }
  const std::size_t c = tb.tokens.dim(1);
  PillarGrid grid = PillarGrid::empty(height, width, c);
  for (std::size_t k = 0; k < tb.coords.size(); ++k) {
    const GridIndex idx = tb.coords[k];
    if (idx.row >= height || idx.col >= width) {
      throw IndexError("scatter: coordinate (" + std::to_string(idx.row) + ", " + std::to_string(idx.col) +
                       ") outside " + std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    auto& m = grid.mask[idx.row * width + idx.col];
    if (m) {
      throw IndexError("scatter: duplicate coordinate (" + std::to_string(idx.row) + ", " +
                       std::to_string(idx.col) + ")");
    }
    m = 1;
    const auto src = tb.tokens.row(k);
    std::copy(src.begin(), src.end(), &grid.data.at(idx.row, idx.col, 0));
  }
  grid.pillar_count = tb.coords.size();
  return grid;
}

}  // namespace pan
