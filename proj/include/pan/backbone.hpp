#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pan/layers.hpp"
#include "pan/pillars.hpp"
#include "pan/rng.hpp"
#include "pan/tensor.hpp"

namespace pan {

struct EnhancerConfig {
  std::size_t embed_dim = 128;
  std::size_t num_heads = 1;
  double dropout_p = 0.1;
  bool conv_enabled = true;
  std::size_t conv_kernel = 3;
  // Default applies dropout to the raw scores before the softmax; set to
  // move it onto the normalized weights instead.
  bool dropout_after_softmax = false;
  bool use_attn_out = true;
  double layer_norm_eps = 1e-5;

  void validate() const;
  std::size_t head_dim() const { return embed_dim / num_heads; }
};

struct EnhancerParams {
  LinearParams enc;  // [C, f]
  LinearParams q, k, v;
  LinearParams attn_out;
  LinearParams mlp1, mlp2;
  LayerNormParams ln;
  LinearParams dec;  // [f, C]
  Tensor conv1_kernel;  // [k, k, C, C]
  Tensor conv1_bias;    // [C]
  BatchNorm conv1_bn;   // [C]
  Tensor conv2_kernel;  // [k, k, C, 3C]
  Tensor conv2_bias;    // [3C]
};

struct PanConfig {
  PillarConfig pillars;
  EnhancerConfig enhancer;

  void validate() const;
  Shape output_shape() const;
};

struct PanParams {
  PfnParams pfn;
  EnhancerParams enhancer;
};

EnhancerParams init_enhancer(std::size_t channels, const EnhancerConfig& cfg, Rng& rng);
PanParams init_pan_params(const PanConfig& cfg, Rng& rng);
// Zeroes every bias and BN shift, keeping weights. Used for receptive-field checks.
void zero_biases(PanParams& params);

// Softmax weights of the last self_attention call, one [P, P] matrix per head.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

Tensor self_attention(const Tensor& x, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                      bool training, AttentionTrace* trace = nullptr);
// Input gradient of self_attention in inference mode.
Tensor self_attention_backward(const Tensor& x, const EnhancerParams& params, const EnhancerConfig& cfg,
                               const Tensor& grad_out);

// Token-level enhancement: enc, attention residual, MLP residual, dec.
Tensor enhance_tokens(const Tensor& tokens, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                      bool training, AttentionTrace* trace = nullptr);
Tensor enhance_tokens_backward(const Tensor& tokens, const EnhancerParams& params, const EnhancerConfig& cfg,
                               const Tensor& grad_out);
TokenBatch enhance(const TokenBatch& tb, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                   bool training, AttentionTrace* trace = nullptr);

// conv(same) -> BN -> relu -> maxpool -> conv(same) on [H, W, C]; yields
// [ceil(H/2), ceil(W/2), 3C].
Tensor conv_refine(const Tensor& x, EnhancerParams& params, bool training);
Tensor conv_refine(const Tensor& x, const EnhancerParams& params);
Tensor conv_refine(const PillarGrid& grid, const EnhancerParams& params);
Tensor conv_refine_backward(const Tensor& x, const EnhancerParams& params, const Tensor& grad_out);

// pillarize -> gather -> enhance -> scatter -> conv_refine. With
// conv_enabled = false the scattered [H, W, C] grid is returned.
Tensor pan_backbone(const PointCloud& pc, PanParams& params, const PanConfig& cfg, Rng& rng, bool training);
Tensor pan_backbone(const PointCloud& pc, const PanParams& params, const PanConfig& cfg);

// Multiply-accumulate counts for one frame.
struct WorkReport {
  std::size_t pillar_count = 0;
  std::size_t grid_cells = 0;
  std::uint64_t token_linear_macs = 0;    // P * per-token linear layers
  std::uint64_t token_pairwise_macs = 0;  // 2 * P^2 * f (scores and weighted sum)
  std::uint64_t attention_macs = 0;       // sum of the two above
  std::uint64_t dense_linear_macs = 0;    // same terms with P = H * W
  std::uint64_t dense_pairwise_macs = 0;
  std::uint64_t dense_equivalent_macs = 0;
  std::uint64_t conv_macs = 0;

  double ratio() const {
    return dense_equivalent_macs ? static_cast<double>(attention_macs) / static_cast<double>(dense_equivalent_macs)
                                 : 0.0;
  }
};

WorkReport count_work(std::size_t pillar_count, const PanConfig& cfg);
WorkReport count_work(const PointCloud& pc, const PanConfig& cfg);

// Named tensors of a parameter set in a fixed order.
void for_each_tensor(PanParams& params, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const PanParams& params, const std::function<void(const std::string&, const Tensor&)>& fn);

// JSON layout: {"format": "pan-params", "version": 1,
//   "tensors": [{"name": str, "shape": [..], "values": [..]}, ...]}
// with values row-major and tensors in for_each_tensor order.
void save_params(std::ostream& out, const PanParams& params);
// Shapes come from cfg; the file must provide exactly those tensors.
PanParams load_params(std::istream& in, const PanConfig& cfg);

}  // namespace pan
