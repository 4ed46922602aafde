#include "pan/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pan/errors.hpp"

namespace pan {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(x.shape()));
  }
}

// Number of rows when the last axis is treated as features.
std::size_t leading_rows(const Tensor& x) {
  return x.rank() == 0 || x.shape().back() == 0 ? 0 : x.size() / x.shape().back();
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

std::size_t padding_for(std::size_t k, Padding padding) { return padding == Padding::kSame ? (k - 1) / 2 : 0; }

struct ConvGeometry {
  std::size_t h, w, cin, kh, kw, cout, pad_h, pad_w, out_h, out_w;
};

ConvGeometry conv_geometry(const Shape& x, const Tensor& kernel, std::size_t stride, Padding padding) {
  if (x.size() != 3) throw DimensionError("conv2d: input must be [H, W, Cin]");
  if (kernel.rank() != 4) throw DimensionError("conv2d: kernel must be [kh, kw, Cin, Cout]");
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.h = x[0];
  g.w = x[1];
  g.cin = x[2];
  g.kh = kernel.dim(0);
  g.kw = kernel.dim(1);
  g.cout = kernel.dim(3);
  if (kernel.dim(2) != g.cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) + " input channels, got " +
                         std::to_string(g.cin));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  g.pad_h = padding_for(g.kh, padding);
  g.pad_w = padding_for(g.kw, padding);
  if (g.h + 2 * g.pad_h < g.kh || g.w + 2 * g.pad_w < g.kw) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  g.out_h = (g.h + 2 * g.pad_h - g.kh) / stride + 1;
  g.out_w = (g.w + 2 * g.pad_w - g.kw) / stride + 1;
  return g;
}

}  // namespace

LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = in ? 1.0 / std::sqrt(static_cast<double>(in)) : 0.0;
  LinearParams p;
  p.weight = uniform_tensor({in, out}, bound, rng);
  p.bias = uniform_tensor({out}, bound, rng);
  return p;
}

LinearParams identity_linear(std::size_t dim) {
  LinearParams p{Tensor({dim, dim}), Tensor({dim})};
  for (std::size_t i = 0; i < dim; ++i) p.weight.at(i, i) = 1.0;
  return p;
}

LayerNormParams init_layer_norm(std::size_t features, double eps) {
  return {Tensor::filled({features}, 1.0), Tensor({features}), eps};
}

BatchNorm init_batch_norm(std::size_t channels) {
  BatchNorm bn;
  bn.gamma = Tensor::filled({channels}, 1.0);
  bn.beta = Tensor({channels});
  bn.running_mean = Tensor({channels});
  bn.running_var = Tensor::filled({channels}, 1.0);
  return bn;
}

Tensor init_conv_kernel(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout, Rng& rng) {
  const std::size_t fan_in = kh * kw * cin;
  return uniform_tensor({kh, kw, cin, cout}, fan_in ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0, rng);
}

Tensor init_conv_bias(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout, Rng& rng) {
  const std::size_t fan_in = kh * kw * cin;
  return uniform_tensor({cout}, fan_in ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0, rng);
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  require_rank(x, 2, "linear");
  if (p.weight.rank() != 2 || x.dim(1) != p.weight.dim(0)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " vs weight " +
                         shape_string(p.weight.shape()));
  }
  require_shape(p.bias, {p.weight.dim(1)}, "linear bias");
  Tensor out = matmul(x, p.weight);
  const std::size_t m = p.out_dim();
  for (std::size_t i = 0; i < out.dim(0); ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) += p.bias[j];
  require_finite(out, "linear");
  return out;
}

LinearGrads linear_backward(const Tensor& x, const LinearParams& p, const Tensor& grad_out) {
  require_shape(grad_out, {x.dim(0), p.out_dim()}, "linear_backward grad");
  LinearGrads g;
  g.input = matmul_transposed(grad_out, p.weight);
  g.weight = matmul(transpose(x), grad_out);
  g.bias = Tensor({p.out_dim()});
  for (std::size_t i = 0; i < grad_out.dim(0); ++i)
    for (std::size_t j = 0; j < p.out_dim(); ++j) g.bias[j] += grad_out.at(i, j);
  return g;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  Tensor out = x;
  for (std::size_t i = 0; i < out.dim(0); ++i) {
    auto r = out.row(i);
    if (r.empty()) continue;
    const double mx = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : r) v /= total;
  }
  require_finite(out, "softmax_rows");
  return out;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_out) {
  require_shape(grad_out, y.shape(), "softmax_rows_backward grad");
  Tensor dx = y;
  for (std::size_t i = 0; i < y.dim(0); ++i) {
    const auto yr = y.row(i);
    const auto gr = grad_out.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
    auto dr = dx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) dr[j] = yr[j] * (gr[j] - dot);
  }
  return dx;
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
  require_rank(x, 2, "layer_norm");
  const std::size_t f = x.dim(1);
  if (f == 0) throw DimensionError("layer_norm: feature dimension must be >= 1");
  require_shape(p.gamma, {f}, "layer_norm gamma");
  require_shape(p.beta, {f}, "layer_norm beta");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(f);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(f);
    const double inv = 1.0 / std::sqrt(var + p.eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < f; ++j) o[j] = (r[j] - mean) * inv * p.gamma[j] + p.beta[j];
  }
  require_finite(out, "layer_norm");
  return out;
}

Tensor layer_norm_backward(const Tensor& x, const LayerNormParams& p, const Tensor& grad_out) {
  require_shape(grad_out, x.shape(), "layer_norm_backward grad");
  const std::size_t f = x.dim(1);
  const double nf = static_cast<double>(f);
  Tensor dx(x.shape());
  std::vector<double> xhat(f), dxhat(f);
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    const auto r = x.row(i);
    const auto g = grad_out.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= nf;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= nf;
    const double inv = 1.0 / std::sqrt(var + p.eps);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      xhat[j] = (r[j] - mean) * inv;
      dxhat[j] = g[j] * p.gamma[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat[j];
    }
    mean_dxhat /= nf;
    mean_dxhat_xhat /= nf;
    auto d = dx.row(i);
    for (std::size_t j = 0; j < f; ++j) d[j] = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
  }
  return dx;
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v * normal_cdf(v);
  require_finite(out, "gelu");
  return out;
}

Tensor gelu_backward(const Tensor& x, const Tensor& grad_out) {
  require_shape(grad_out, x.shape(), "gelu_backward grad");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = grad_out[i] * (normal_cdf(x[i]) + x[i] * normal_pdf(x[i]));
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = std::max(v, 0.0);
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_shape(grad_out, x.shape(), "relu_backward grad");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  return dx;
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training, Tensor* scale_out) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) {
    if (scale_out) *scale_out = Tensor::filled(x.shape(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor out = x;
  Tensor scale(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    scale[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    out[i] *= scale[i];
  }
  if (scale_out) *scale_out = std::move(scale);
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride, Padding padding) {
  const ConvGeometry g = conv_geometry(x.shape(), kernel, stride, padding);
  if (!bias.empty()) require_shape(bias, {g.cout}, "conv2d bias");
  Tensor out({g.out_h, g.out_w, g.cout});
  for (std::size_t oi = 0; oi < g.out_h; ++oi) {
    for (std::size_t oj = 0; oj < g.out_w; ++oj) {
      double* acc = &out.at(oi, oj, 0);
      if (!bias.empty())
        for (std::size_t co = 0; co < g.cout; ++co) acc[co] = bias[co];
      for (std::size_t a = 0; a < g.kh; ++a) {
        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + a) - static_cast<std::ptrdiff_t>(g.pad_h);
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t b = 0; b < g.kw; ++b) {
          const std::ptrdiff_t jj =
              static_cast<std::ptrdiff_t>(oj * stride + b) - static_cast<std::ptrdiff_t>(g.pad_w);
          if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* in = &x.at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
          const double* k = kernel.data().data() + ((a * g.kw + b) * g.cin) * g.cout;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double v = in[ci];
            if (v == 0.0) continue;
            const double* kc = k + ci * g.cout;
            for (std::size_t co = 0; co < g.cout; ++co) acc[co] += v * kc[co];
          }
        }
      }
    }
  }
  require_finite(out, "conv2d");
  return out;
}

Tensor conv2d_backward_input(const Shape& input_shape, const Tensor& kernel, std::size_t stride,
                             Padding padding, const Tensor& grad_out) {
  const ConvGeometry g = conv_geometry(input_shape, kernel, stride, padding);
  require_shape(grad_out, {g.out_h, g.out_w, g.cout}, "conv2d_backward_input grad");
  Tensor dx(input_shape);
  for (std::size_t oi = 0; oi < g.out_h; ++oi) {
    for (std::size_t oj = 0; oj < g.out_w; ++oj) {
      const double* go = &grad_out.at(oi, oj, 0);
      for (std::size_t a = 0; a < g.kh; ++a) {
        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + a) - static_cast<std::ptrdiff_t>(g.pad_h);
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t b = 0; b < g.kw; ++b) {
          const std::ptrdiff_t jj =
              static_cast<std::ptrdiff_t>(oj * stride + b) - static_cast<std::ptrdiff_t>(g.pad_w);
          if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
          double* d = &dx.at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
          const double* k = kernel.data().data() + ((a * g.kw + b) * g.cin) * g.cout;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double* kc = k + ci * g.cout;
            double acc = 0.0;
            for (std::size_t co = 0; co < g.cout; ++co) acc += go[co] * kc[co];
            d[ci] += acc;
          }
        }
      }
    }
  }
  return dx;
}

namespace {

void check_bn(const Tensor& x, const BatchNorm& bn) {
  if (x.rank() == 0) throw DimensionError("batch_norm: empty shape");
  const std::size_t c = x.shape().back();
  require_shape(bn.gamma, {c}, "batch_norm gamma");
  require_shape(bn.beta, {c}, "batch_norm beta");
  require_shape(bn.running_mean, {c}, "batch_norm running_mean");
  require_shape(bn.running_var, {c}, "batch_norm running_var");
}

Tensor normalize(const Tensor& x, const BatchNorm& bn, const std::vector<double>& mean,
                 const std::vector<double>& var) {
  const std::size_t c = x.shape().back();
  const std::size_t n = leading_rows(x);
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double scale = bn.gamma[ch] / std::sqrt(var[ch] + bn.eps);
    for (std::size_t i = 0; i < n; ++i) out[i * c + ch] = (x[i * c + ch] - mean[ch]) * scale + bn.beta[ch];
  }
  require_finite(out, "batch_norm");
  return out;
}

}  // namespace

Tensor batch_norm(const Tensor& x, BatchNorm& bn, bool training) {
  check_bn(x, bn);
  if (!training) return batch_norm(x, static_cast<const BatchNorm&>(bn));
  const std::size_t c = x.shape().back();
  const std::size_t n = leading_rows(x);
  if (n == 0) return x;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[i * c + ch];
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = x[i * c + ch] - mean[ch];
      var[ch] += d * d;
    }
  for (double& v : var) v /= static_cast<double>(n);
  const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    bn.running_mean[ch] = (1.0 - bn.momentum) * bn.running_mean[ch] + bn.momentum * mean[ch];
    bn.running_var[ch] = (1.0 - bn.momentum) * bn.running_var[ch] + bn.momentum * var[ch] * unbias;
  }
  return normalize(x, bn, mean, var);
}

Tensor batch_norm(const Tensor& x, const BatchNorm& bn) {
  check_bn(x, bn);
  return normalize(x, bn, bn.running_mean.storage(), bn.running_var.storage());
}

Tensor batch_norm_backward_inference(const BatchNorm& bn, const Tensor& grad_out) {
  const std::size_t c = bn.channels();
  if (grad_out.rank() == 0 || grad_out.shape().back() != c) {
    throw DimensionError("batch_norm_backward_inference: channel mismatch");
  }
  Tensor dx = grad_out;
  const std::size_t n = leading_rows(dx);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double scale = bn.gamma[ch] / std::sqrt(bn.running_var[ch] + bn.eps);
    for (std::size_t i = 0; i < n; ++i) dx[i * c + ch] *= scale;
  }
  return dx;
}

Tensor batch_norm2d(const Tensor& x, BatchNorm& bn, bool training) {
  require_rank(x, 3, "batch_norm2d");
  return batch_norm(x, bn, training);
}

Tensor batch_norm2d(const Tensor& x, const BatchNorm& bn) {
  require_rank(x, 3, "batch_norm2d");
  return batch_norm(x, bn);
}

Tensor max_pool2d(const Tensor& x) {
  require_rank(x, 3, "max_pool2d");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out({oh, ow, c}, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double& o = out.at(i / 2, j / 2, ch);
        o = std::max(o, x.at(i, j, ch));
      }
  require_finite(out, "max_pool2d");
  return out;
}

Tensor max_pool2d_backward(const Tensor& x, const Tensor& grad_out) {
  require_rank(x, 3, "max_pool2d_backward");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  require_shape(grad_out, {(h + 1) / 2, (w + 1) / 2, c}, "max_pool2d_backward grad");
  Tensor dx(x.shape());
  for (std::size_t oi = 0; oi < grad_out.dim(0); ++oi)
    for (std::size_t oj = 0; oj < grad_out.dim(1); ++oj)
      for (std::size_t ch = 0; ch < c; ++ch) {
        // First maximum in scan order receives the gradient.
        std::size_t bi = 2 * oi, bj = 2 * oj;
        for (std::size_t i = 2 * oi; i < std::min(h, 2 * oi + 2); ++i)
          for (std::size_t j = 2 * oj; j < std::min(w, 2 * oj + 2); ++j)
            if (x.at(i, j, ch) > x.at(bi, bj, ch)) {
              bi = i;
              bj = j;
            }
        dx.at(bi, bj, ch) += grad_out.at(oi, oj, ch);
      }
  return dx;
}

}  // namespace pan
