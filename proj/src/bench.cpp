#include "pan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "pan/errors.hpp"

namespace pan {

Timing time_median(const std::function<void()>& fn, std::size_t repeats) {
  if (repeats == 0) throw ParameterError("time_median: repeats must be >= 1");
  Timing t;
  t.samples_ms.reserve(repeats);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    t.samples_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::vector<double> sorted = t.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  t.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return t;
}

BackboneBench bench_backbone(const PointCloud& pc, const PanParams& params, const PanConfig& cfg,
                             std::size_t repeats) {
  BackboneBench b;
  b.work = count_work(pc, cfg);
  volatile double sink = 0.0;
  b.timing = time_median(
      [&] {
        const Tensor out = pan_backbone(pc, params, cfg);
        sink = sink + (out.size() ? out[0] : 0.0);
      },
      repeats);
  return b;
}

PointCloud occupancy_cloud(const PillarConfig& cfg, double fill, Rng& rng) {
  cfg.validate();
  if (!(fill >= 0.0 && fill <= 1.0)) throw ParameterError("occupancy_cloud: fill must lie in [0, 1]");
  const std::size_t h = cfg.height(), w = cfg.width(), cells = h * w;
  const auto n = static_cast<std::size_t>(std::llround(fill * static_cast<double>(cells)));
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n entries are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) std::swap(order[i], order[i + rng.below(cells - i)]);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  PointCloud pc;
  pc.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = order[i] / w, col = order[i] % w;
    RadarPoint p;
    p.x = cfg.x_min + (static_cast<double>(col) + rng.uniform(0.05, 0.95)) * cfg.pillar_size;
    p.y = cfg.y_min + (static_cast<double>(row) + rng.uniform(0.05, 0.95)) * cfg.pillar_size;
    p.vx = rng.normal();
    p.vy = rng.normal();
    p.rcs = rng.normal(0.0, 5.0);
    pc.points.push_back(p);
  }
  return pc;
}

}  // namespace pan
