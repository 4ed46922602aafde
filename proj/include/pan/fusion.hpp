#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pan/layers.hpp"
#include "pan/tensor.hpp"

namespace pan {

struct BevFeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  double meters_per_cell = 1.0;
  Tensor data;  // [H, W, C]

  static BevFeatureMap from_tensor(Tensor data, double meters_per_cell = 1.0);
  void validate() const;
};

// Affine map from normalized [0,1]^2 query coordinates to a map's pixel grid,
// pixel = p * scale + offset, with pixel (col, row) = cell center.
struct CoordinateScaling {
  double scale_x = 0.0;
  double scale_y = 0.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  // (W - 1, H - 1) scaling: 0 maps to the first cell center, 1 to the last.
  static CoordinateScaling for_map(const BevFeatureMap& map);
};

enum class BorderMode {
  kClamp,  // coordinates clamp to the border cells
  kZeros,  // neighbors outside the map contribute zero
};

struct NormalizedPoint {
  double x = 0.0;  // along width
  double y = 0.0;  // along height
};

Tensor bilinear_sample(const BevFeatureMap& map, NormalizedPoint p, BorderMode border = BorderMode::kClamp);
Tensor bilinear_sample(const BevFeatureMap& map, NormalizedPoint p, const CoordinateScaling& phi,
                       BorderMode border = BorderMode::kClamp);

// Reference points p_q for an H x W query grid, row-major, normalized so
// they land on the cell centers of a same-sized map.
std::vector<NormalizedPoint> reference_points(std::size_t height, std::size_t width);

struct OccupancyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor probs;                      // [H, W]
  std::vector<std::uint8_t> binary;  // H*W, 1 when probs >= threshold
  double threshold = 0.5;
};

struct OccupancyHeadParams {
  LinearParams logits;  // [C, 1]
};

// Per-cell 1x1 linear -> logistic -> threshold (>=).
OccupancyMap occupancy_head(const BevFeatureMap& feat, const OccupancyHeadParams& params, double threshold = 0.5);

// How the sampling weights of one (head, query) are normalized.
enum class WeightNormalization {
  kJoint,        // softmax over all modalities and points together
  kPerModality,  // softmax over points within each modality
};

// Multi-modal deformable cross-attention.
//   out_q = sum_h W_h [ sum_m sum_k A_hmqk W'_hm x_m(phi_m(p_q + dp_hmqk)) ]
// Offsets dp and logits of A are linear functions of the query features.
struct McdaParams {
  std::size_t heads = 1;
  std::size_t modalities = 2;
  std::size_t points = 1;
  std::size_t head_dim = 1;
  std::vector<std::vector<Tensor>> value_proj;  // [h][m]: [C_m, head_dim]
  std::vector<Tensor> output_proj;              // [h]: [head_dim, C_out]
  LinearParams offsets;                         // [C_q, heads*modalities*points*2], (x, y) pairs
  LinearParams weights;                         // [C_q, heads*modalities*points]
  WeightNormalization normalization = WeightNormalization::kJoint;
  BorderMode border = BorderMode::kClamp;

  std::size_t out_dim() const { return output_proj.empty() ? 0 : output_proj.front().dim(1); }
  // Flat index of (head, modality, point) inside the predictor outputs.
  std::size_t slot(std::size_t h, std::size_t m, std::size_t k) const { return (h * modalities + m) * points + k; }
};

McdaParams init_mdca(std::size_t query_dim, const std::vector<std::size_t>& map_channels, std::size_t heads,
                     std::size_t points, std::size_t head_dim, std::size_t out_dim, Rng& rng);

// Sampling weights A for one query: [heads, modalities*points].
Tensor mdca_weights(const Tensor& query_row, const McdaParams& params);

// query_feats [Nq, C_q], ref_points length Nq. Throws ConfigError when the
// number of maps differs from params.modalities. `phis` may be empty, in
// which case CoordinateScaling::for_map is used per modality.
Tensor mdca(const Tensor& query_feats, const std::vector<NormalizedPoint>& ref_points,
            const std::vector<BevFeatureMap>& maps, const McdaParams& params,
            const std::vector<CoordinateScaling>& phis = {});

// Nearest-neighbor upsample by an integer factor and the matching phi that
// keeps cell-center samples unchanged.
BevFeatureMap upsample_nearest(const BevFeatureMap& map, std::size_t factor);
CoordinateScaling upsampled_scaling(const BevFeatureMap& original, std::size_t factor);

}  // namespace pan
