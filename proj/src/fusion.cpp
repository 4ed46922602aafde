#include "pan/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "pan/errors.hpp"

namespace pan {

BevFeatureMap BevFeatureMap::from_tensor(Tensor data, double meters_per_cell) {
  if (data.rank() != 3) throw DimensionError("BevFeatureMap: data must be [H, W, C]");
  BevFeatureMap m;
  m.height = data.dim(0);
  m.width = data.dim(1);
  m.channels = data.dim(2);
  m.meters_per_cell = meters_per_cell;
  m.data = std::move(data);
  m.validate();
  return m;
}

void BevFeatureMap::validate() const {
  if (!(meters_per_cell > 0.0)) throw ConfigError("BevFeatureMap: meters_per_cell must be > 0");
  if (height == 0 || width == 0) throw DimensionError("BevFeatureMap: empty grid");
  require_shape(data, {height, width, channels}, "BevFeatureMap data");
}

CoordinateScaling CoordinateScaling::for_map(const BevFeatureMap& map) {
  return {static_cast<double>(map.width - 1), static_cast<double>(map.height - 1), 0.0, 0.0};
}

Tensor bilinear_sample(const BevFeatureMap& map, NormalizedPoint p, BorderMode border) {
  return bilinear_sample(map, p, CoordinateScaling::for_map(map), border);
}

Tensor bilinear_sample(const BevFeatureMap& map, NormalizedPoint p, const CoordinateScaling& phi,
                       BorderMode border) {
  const std::size_t c = map.channels;
  const double max_x = static_cast<double>(map.width - 1);
  const double max_y = static_cast<double>(map.height - 1);
  double px = p.x * phi.scale_x + phi.offset_x;
  double py = p.y * phi.scale_y + phi.offset_y;
  if (!std::isfinite(px) || !std::isfinite(py)) throw NumericError("bilinear_sample: non-finite coordinate");
  if (border == BorderMode::kClamp) {
    px = std::clamp(px, 0.0, max_x);
    py = std::clamp(py, 0.0, max_y);
  }
  const double fx = std::floor(px), fy = std::floor(py);
  const double tx = px - fx, ty = py - fy;
  const auto x0 = static_cast<long long>(fx), y0 = static_cast<long long>(fy);

  Tensor out({c});
  const auto add = [&](long long row, long long col, double w) {
    if (w == 0.0) return;
    if (row < 0 || col < 0 || row >= static_cast<long long>(map.height) || col >= static_cast<long long>(map.width)) {
      return;
    }
    const double* cell = &map.data.at(static_cast<std::size_t>(row), static_cast<std::size_t>(col), 0);
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += w * cell[ch];
  };
  add(y0, x0, (1.0 - tx) * (1.0 - ty));
  add(y0, x0 + 1, tx * (1.0 - ty));
  add(y0 + 1, x0, (1.0 - tx) * ty);
  add(y0 + 1, x0 + 1, tx * ty);
  return out;
}

std::vector<NormalizedPoint> reference_points(std::size_t height, std::size_t width) {
  std::vector<NormalizedPoint> pts;
  pts.reserve(height * width);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j)
      pts.push_back({width > 1 ? static_cast<double>(j) / static_cast<double>(width - 1) : 0.0,
                     height > 1 ? static_cast<double>(i) / static_cast<double>(height - 1) : 0.0});
  return pts;
}

OccupancyMap occupancy_head(const BevFeatureMap& feat, const OccupancyHeadParams& params, double threshold) {
  feat.validate();
  if (params.logits.weight.rank() != 2 || params.logits.out_dim() != 1) {
    throw DimensionError("occupancy_head: logits must map C -> 1");
  }
  const std::size_t cells = feat.height * feat.width;
  const Tensor logits = linear(feat.data.reshaped({cells, feat.channels}), params.logits);
  OccupancyMap occ;
  occ.height = feat.height;
  occ.width = feat.width;
  occ.threshold = threshold;
  occ.probs = Tensor({feat.height, feat.width});
  occ.binary.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const double prob = 1.0 / (1.0 + std::exp(-logits[i]));
    occ.probs[i] = prob;
    occ.binary[i] = prob >= threshold ? 1 : 0;
  }
  return occ;
}

McdaParams init_mdca(std::size_t query_dim, const std::vector<std::size_t>& map_channels, std::size_t heads,
                     std::size_t points, std::size_t head_dim, std::size_t out_dim, Rng& rng) {
  McdaParams p;
  p.heads = heads;
  p.modalities = map_channels.size();
  p.points = points;
  p.head_dim = head_dim;
  p.value_proj.resize(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t m = 0; m < p.modalities; ++m) p.value_proj[h].push_back(init_linear(map_channels[m], head_dim, rng).weight);
    p.output_proj.push_back(init_linear(head_dim, out_dim, rng).weight);
  }
  const std::size_t slots = heads * p.modalities * points;
  p.offsets = init_linear(query_dim, 2 * slots, rng);
  // Offsets start small relative to the unit square.
  for (double& v : p.offsets.weight.data()) v *= 0.1;
  for (double& v : p.offsets.bias.data()) v *= 0.1;
  p.weights = init_linear(query_dim, slots, rng);
  return p;
}

namespace {

void softmax_inplace(double* v, std::size_t n) {
  const double mx = *std::max_element(v, v + n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    total += v[i];
  }
  for (std::size_t i = 0; i < n; ++i) v[i] /= total;
}

void check_mdca(const Tensor& query_feats, const std::vector<NormalizedPoint>& ref_points,
                const std::vector<BevFeatureMap>& maps, const McdaParams& p,
                const std::vector<CoordinateScaling>& phis) {
  if (maps.size() != p.modalities) {
    throw ConfigError("mdca: params expect " + std::to_string(p.modalities) + " modalities, got " +
                      std::to_string(maps.size()) + " maps");
  }
  if (!phis.empty() && phis.size() != maps.size()) throw ConfigError("mdca: one coordinate scaling per map");
  if (query_feats.rank() != 2 || query_feats.dim(0) != ref_points.size()) {
    throw DimensionError("mdca: query_feats must be [Nq, C_q] with Nq reference points");
  }
  if (p.heads == 0 || p.points == 0) throw ConfigError("mdca: heads and points must be >= 1");
  if (p.value_proj.size() != p.heads || p.output_proj.size() != p.heads) {
    throw DimensionError("mdca: projection lists must have one entry per head");
  }
  const std::size_t slots = p.heads * p.modalities * p.points;
  if (p.offsets.in_dim() != query_feats.dim(1) || p.offsets.out_dim() != 2 * slots) {
    throw DimensionError("mdca: offset predictor must be [C_q, 2*H*M*K]");
  }
  if (p.weights.in_dim() != query_feats.dim(1) || p.weights.out_dim() != slots) {
    throw DimensionError("mdca: weight predictor must be [C_q, H*M*K]");
  }
  for (std::size_t h = 0; h < p.heads; ++h) {
    if (p.value_proj[h].size() != p.modalities) throw DimensionError("mdca: one value projection per modality");
    for (std::size_t m = 0; m < p.modalities; ++m) {
      maps[m].validate();
      require_shape(p.value_proj[h][m], {maps[m].channels, p.head_dim}, "mdca value projection");
    }
    require_shape(p.output_proj[h], {p.head_dim, p.out_dim()}, "mdca output projection");
  }
}

}  // namespace

Tensor mdca_weights(const Tensor& query_row, const McdaParams& params) {
  const Tensor logits = linear(query_row.reshaped({1, query_row.size()}), params.weights);
  const std::size_t per_head = params.modalities * params.points;
  Tensor a({params.heads, per_head}, logits.storage());
  for (std::size_t h = 0; h < params.heads; ++h) {
    double* row = a.row(h).data();
    if (params.normalization == WeightNormalization::kJoint) {
      softmax_inplace(row, per_head);
    } else {
      for (std::size_t m = 0; m < params.modalities; ++m) softmax_inplace(row + m * params.points, params.points);
    }
  }
  return a;
}

Tensor mdca(const Tensor& query_feats, const std::vector<NormalizedPoint>& ref_points,
            const std::vector<BevFeatureMap>& maps, const McdaParams& params,
            const std::vector<CoordinateScaling>& phis) {
  check_mdca(query_feats, ref_points, maps, params, phis);
  const std::size_t nq = query_feats.dim(0), cq = query_feats.dim(1), d = params.head_dim;
  const std::size_t cout = params.out_dim();
  const Tensor offsets = linear(query_feats, params.offsets);

  Tensor out({nq, cout});
  std::vector<double> head_acc(d);
  for (std::size_t q = 0; q < nq; ++q) {
    const Tensor a = mdca_weights(Tensor({cq}, std::vector<double>(query_feats.row(q).begin(), query_feats.row(q).end())),
                                  params);
    auto out_row = out.row(q);
    for (std::size_t h = 0; h < params.heads; ++h) {
      std::fill(head_acc.begin(), head_acc.end(), 0.0);
      for (std::size_t m = 0; m < params.modalities; ++m) {
        const CoordinateScaling phi = phis.empty() ? CoordinateScaling::for_map(maps[m]) : phis[m];
        const Tensor& proj = params.value_proj[h][m];
        for (std::size_t k = 0; k < params.points; ++k) {
          const std::size_t s = params.slot(h, m, k);
          const NormalizedPoint at{ref_points[q].x + offsets.at(q, 2 * s), ref_points[q].y + offsets.at(q, 2 * s + 1)};
          const Tensor sample = bilinear_sample(maps[m], at, phi, params.border);
          const double w = a.at(h, m * params.points + k);
          for (std::size_t c = 0; c < sample.size(); ++c) {
            const double ws = w * sample[c];
            if (ws == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) head_acc[j] += ws * proj.at(c, j);
          }
        }
      }
      const Tensor& wo = params.output_proj[h];
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t o = 0; o < cout; ++o) out_row[o] += head_acc[j] * wo.at(j, o);
    }
  }
  require_finite(out, "mdca");
  return out;
}

BevFeatureMap upsample_nearest(const BevFeatureMap& map, std::size_t factor) {
  if (factor == 0) throw ParameterError("upsample_nearest: factor must be >= 1");
  Tensor data({map.height * factor, map.width * factor, map.channels});
  for (std::size_t i = 0; i < data.dim(0); ++i)
    for (std::size_t j = 0; j < data.dim(1); ++j)
      for (std::size_t c = 0; c < map.channels; ++c) data.at(i, j, c) = map.data.at(i / factor, j / factor, c);
  return BevFeatureMap::from_tensor(std::move(data), map.meters_per_cell / static_cast<double>(factor));
}

CoordinateScaling upsampled_scaling(const BevFeatureMap& original, std::size_t factor) {
  const double f = static_cast<double>(factor);
  const double shift = (f - 1.0) / 2.0;
  return {f * static_cast<double>(original.width - 1), f * static_cast<double>(original.height - 1), shift, shift};
}

}  // namespace pan
