#pragma once

#include <cstddef>

#include "pan/rng.hpp"
#include "pan/tensor.hpp"

namespace pan {

// Fully connected layer: y = x W + b with W stored [in, out].
struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
};

struct LayerNormParams {
  Tensor gamma;  // [f]
  Tensor beta;   // [f]
  double eps = 1e-5;
};

// Batch norm over the last axis. Every leading axis counts as batch.
// Running statistics follow r <- (1 - momentum) r + momentum s, where the
// variance fed to the update is the unbiased batch estimate.
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  std::size_t channels() const { return gamma.size(); }
};

enum class Padding { kSame, kValid };

// Parameter construction. Weights and biases are drawn from
// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng);
LinearParams identity_linear(std::size_t dim);
LayerNormParams init_layer_norm(std::size_t features, double eps = 1e-5);
BatchNorm init_batch_norm(std::size_t channels);
Tensor init_conv_kernel(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout, Rng& rng);
Tensor init_conv_bias(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout, Rng& rng);

Tensor linear(const Tensor& x, const LinearParams& p);

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
LinearGrads linear_backward(const Tensor& x, const LinearParams& p, const Tensor& grad_out);

Tensor softmax_rows(const Tensor& x);
// Takes the softmax output, not its input.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_out);

Tensor layer_norm(const Tensor& x, const LayerNormParams& p);
Tensor layer_norm_backward(const Tensor& x, const LayerNormParams& p, const Tensor& grad_out);

Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& grad_out);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

// Inverted dropout. When `scale_out` is given it receives the per-element
// multiplier (0 or 1/(1-p)), which is also the backward rule.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training, Tensor* scale_out = nullptr);

// Cross-correlation of x [H, W, Cin] with kernel [kh, kw, Cin, Cout].
// `bias` is [Cout] or empty. Same padding pads (k-1)/2 on each side.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1,
              Padding padding = Padding::kSame);
Tensor conv2d_backward_input(const Shape& input_shape, const Tensor& kernel, std::size_t stride,
                             Padding padding, const Tensor& grad_out);

Tensor batch_norm(const Tensor& x, BatchNorm& bn, bool training);
Tensor batch_norm(const Tensor& x, const BatchNorm& bn);
Tensor batch_norm_backward_inference(const BatchNorm& bn, const Tensor& grad_out);

// [H, W, C] wrappers over batch_norm that check the rank.
Tensor batch_norm2d(const Tensor& x, BatchNorm& bn, bool training);
Tensor batch_norm2d(const Tensor& x, const BatchNorm& bn);

// 2x2 window, stride 2. Odd extents are padded with -inf on the high side,
// so the output is [ceil(H/2), ceil(W/2), C].
Tensor max_pool2d(const Tensor& x);
Tensor max_pool2d_backward(const Tensor& x, const Tensor& grad_out);

}  // namespace pan
