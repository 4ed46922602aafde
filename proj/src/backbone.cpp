#include "pan/backbone.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "pan/errors.hpp"

namespace pan {

void EnhancerConfig::validate() const {
  if (embed_dim == 0) throw ConfigError("enhancer config: embed_dim must be >= 1");
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("enhancer config: embed_dim must be divisible by num_heads");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("enhancer config: dropout_p must lie in [0, 1)");
  if (conv_kernel == 0 || conv_kernel % 2 == 0) throw ConfigError("enhancer config: conv_kernel must be odd");
  if (!(layer_norm_eps >= 0.0)) throw ConfigError("enhancer config: layer_norm_eps must be >= 0");
}

void PanConfig::validate() const {
  pillars.validate();
  enhancer.validate();
}

Shape PanConfig::output_shape() const {
  const std::size_t h = pillars.height(), w = pillars.width(), c = pillars.out_channels;
  if (!enhancer.conv_enabled) return {h, w, c};
  return {(h + 1) / 2, (w + 1) / 2, 3 * c};
}

EnhancerParams init_enhancer(std::size_t channels, const EnhancerConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t f = cfg.embed_dim, c = channels, k = cfg.conv_kernel;
  EnhancerParams p;
  p.enc = init_linear(c, f, rng);
  p.q = init_linear(f, f, rng);
  p.k = init_linear(f, f, rng);
  p.v = init_linear(f, f, rng);
  p.attn_out = init_linear(f, f, rng);
  p.mlp1 = init_linear(f, f, rng);
  p.mlp2 = init_linear(f, f, rng);
  p.ln = init_layer_norm(f, cfg.layer_norm_eps);
  p.dec = init_linear(f, c, rng);
  p.conv1_kernel = init_conv_kernel(k, k, c, c, rng);
  p.conv1_bias = init_conv_bias(k, k, c, c, rng);
  p.conv1_bn = init_batch_norm(c);
  p.conv2_kernel = init_conv_kernel(k, k, c, 3 * c, rng);
  p.conv2_bias = init_conv_bias(k, k, c, 3 * c, rng);
  return p;
}

PanParams init_pan_params(const PanConfig& cfg, Rng& rng) {
  cfg.validate();
  PanParams p;
  p.pfn = init_pfn(cfg.pillars, rng);
  p.enhancer = init_enhancer(cfg.pillars.out_channels, cfg.enhancer, rng);
  return p;
}

void zero_biases(PanParams& params) {
  for_each_tensor(params, [](const std::string& name, Tensor& t) {
    const bool is_bias = name.ends_with(".bias") || name.ends_with("_bias") || name.ends_with(".beta") ||
                         name.ends_with(".running_mean");
    if (is_bias) t = Tensor(t.shape());
  });
}

namespace {

Tensor head_columns(const Tensor& x, std::size_t head, std::size_t dk) {
  Tensor out({x.dim(0), dk});
  for (std::size_t i = 0; i < x.dim(0); ++i)
    for (std::size_t j = 0; j < dk; ++j) out.at(i, j) = x.at(i, head * dk + j);
  return out;
}

void put_head_columns(Tensor& dst, const Tensor& src, std::size_t head, std::size_t dk) {
  for (std::size_t i = 0; i < src.dim(0); ++i)
    for (std::size_t j = 0; j < dk; ++j) dst.at(i, head * dk + j) = src.at(i, j);
}

struct AttentionCache {
  Tensor q, k, v;
  std::vector<Tensor> weights;      // softmax output per head
  std::vector<Tensor> drop_scale;   // dropout multipliers per head
  Tensor context;                   // [P, f] before the output projection
};

Tensor attention_forward(const Tensor& x, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                         bool training, AttentionCache& cache) {
  cfg.validate();
  if (x.rank() != 2 || x.dim(1) != cfg.embed_dim) throw DimensionError("self_attention: input must be [P, embed_dim]");
  const std::size_t p = x.dim(0), f = cfg.embed_dim, heads = cfg.num_heads, dk = cfg.head_dim();
  cache.weights.clear();
  cache.drop_scale.clear();
  if (p == 0) {
    cache.context = Tensor({0, f});
    return Tensor({0, cfg.use_attn_out ? params.attn_out.out_dim() : f});
  }
  cache.q = linear(x, params.q);
  cache.k = linear(x, params.k);
  cache.v = linear(x, params.v);
  cache.context = Tensor({p, f});
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = head_columns(cache.q, h, dk);
    const Tensor kh = head_columns(cache.k, h, dk);
    const Tensor vh = head_columns(cache.v, h, dk);
    Tensor scores = matmul_transposed(qh, kh) * inv_scale;
    Tensor scale;
    if (!cfg.dropout_after_softmax) scores = dropout(scores, cfg.dropout_p, rng, training, &scale);
    Tensor weights = softmax_rows(scores);
    Tensor effective = weights;
    if (cfg.dropout_after_softmax) effective = dropout(weights, cfg.dropout_p, rng, training, &scale);
    put_head_columns(cache.context, matmul(effective, vh), h, dk);
    cache.weights.push_back(std::move(weights));
    cache.drop_scale.push_back(std::move(scale));
  }
  return cfg.use_attn_out ? linear(cache.context, params.attn_out) : cache.context;
}

Tensor attention_backward(const Tensor& x, const EnhancerParams& params, const EnhancerConfig& cfg,
                          const AttentionCache& cache, const Tensor& grad_out) {
  const std::size_t p = x.dim(0), f = cfg.embed_dim, dk = cfg.head_dim();
  if (p == 0) return Tensor(x.shape());
  const Tensor dctx = cfg.use_attn_out ? linear_backward(cache.context, params.attn_out, grad_out).input : grad_out;
  Tensor dq({p, f}), dk_all({p, f}), dv({p, f});
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const Tensor qh = head_columns(cache.q, h, dk);
    const Tensor kh = head_columns(cache.k, h, dk);
    const Tensor vh = head_columns(cache.v, h, dk);
    const Tensor dctx_h = head_columns(dctx, h, dk);
    const Tensor& w = cache.weights[h];
    const Tensor& scale = cache.drop_scale[h];

    Tensor effective = w;
    if (cfg.dropout_after_softmax)
      for (std::size_t i = 0; i < w.size(); ++i) effective[i] *= scale[i];
    put_head_columns(dv, matmul(transpose(effective), dctx_h), h, dk);

    Tensor dw = matmul_transposed(dctx_h, vh);
    if (cfg.dropout_after_softmax)
      for (std::size_t i = 0; i < dw.size(); ++i) dw[i] *= scale[i];
    Tensor ds = softmax_rows_backward(w, dw);
    if (!cfg.dropout_after_softmax)
      for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= scale[i];
    ds = ds * inv_scale;
    put_head_columns(dq, matmul(ds, kh), h, dk);
    put_head_columns(dk_all, matmul(transpose(ds), qh), h, dk);
  }
  Tensor dx = linear_backward(x, params.q, dq).input;
  dx += linear_backward(x, params.k, dk_all).input;
  dx += linear_backward(x, params.v, dv).input;
  return dx;
}

}  // namespace

Tensor self_attention(const Tensor& x, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                      bool training, AttentionTrace* trace) {
  AttentionCache cache;
  Tensor out = attention_forward(x, params, cfg, rng, training, cache);
  if (trace) trace->weights = std::move(cache.weights);
  return out;
}

Tensor self_attention_backward(const Tensor& x, const EnhancerParams& params, const EnhancerConfig& cfg,
                               const Tensor& grad_out) {
  AttentionCache cache;
  Rng unused(0);
  attention_forward(x, params, cfg, unused, false, cache);
  return attention_backward(x, params, cfg, cache, grad_out);
}

namespace {

struct EnhanceCache {
  Tensor e, a, h1, h2, h3, m;
  AttentionCache attention;
};

Tensor enhance_forward(const Tensor& tokens, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                       bool training, EnhanceCache& c) {
  if (tokens.rank() != 2) throw DimensionError("enhance: tokens must be [P, C]");
  if (tokens.dim(0) == 0) {
    c.attention.weights.clear();
    return Tensor({0, params.dec.out_dim()});
  }
  c.e = linear(tokens, params.enc);
  c.a = c.e + attention_forward(c.e, params, cfg, rng, training, c.attention);
  c.h1 = linear(c.a, params.mlp1);
  c.h2 = layer_norm(c.h1, params.ln);
  c.h3 = gelu(c.h2);
  c.m = c.a + linear(c.h3, params.mlp2);
  return linear(c.m, params.dec);
}

}  // namespace

Tensor enhance_tokens(const Tensor& tokens, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                      bool training, AttentionTrace* trace) {
  EnhanceCache cache;
  Tensor out = enhance_forward(tokens, params, cfg, rng, training, cache);
  if (trace) trace->weights = std::move(cache.attention.weights);
  return out;
}

Tensor enhance_tokens_backward(const Tensor& tokens, const EnhancerParams& params, const EnhancerConfig& cfg,
                               const Tensor& grad_out) {
  EnhanceCache c;
  Rng unused(0);
  enhance_forward(tokens, params, cfg, unused, false, c);
  if (tokens.dim(0) == 0) return Tensor(tokens.shape());
  const Tensor dm = linear_backward(c.m, params.dec, grad_out).input;
  // m = a + mlp2(gelu(ln(mlp1(a))))
  Tensor dh3 = linear_backward(c.h3, params.mlp2, dm).input;
  Tensor dh2 = gelu_backward(c.h2, dh3);
  Tensor dh1 = layer_norm_backward(c.h1, params.ln, dh2);
  Tensor da = dm + linear_backward(c.a, params.mlp1, dh1).input;
  // a = e + attention(e)
  Tensor de = da + attention_backward(c.e, params, cfg, c.attention, da);
  return linear_backward(tokens, params.enc, de).input;
}

TokenBatch enhance(const TokenBatch& tb, const EnhancerParams& params, const EnhancerConfig& cfg, Rng& rng,
                   bool training, AttentionTrace* trace) {
  return {enhance_tokens(tb.tokens, params, cfg, rng, training, trace), tb.coords};
}

Tensor conv_refine(const Tensor& x, EnhancerParams& params, bool training) {
  const Tensor c1 = conv2d(x, params.conv1_kernel, params.conv1_bias, 1, Padding::kSame);
  const Tensor pooled = max_pool2d(relu(batch_norm2d(c1, params.conv1_bn, training)));
  return conv2d(pooled, params.conv2_kernel, params.conv2_bias, 1, Padding::kSame);
}

Tensor conv_refine(const Tensor& x, const EnhancerParams& params) {
  const Tensor c1 = conv2d(x, params.conv1_kernel, params.conv1_bias, 1, Padding::kSame);
  const Tensor pooled = max_pool2d(relu(batch_norm2d(c1, params.conv1_bn)));
  return conv2d(pooled, params.conv2_kernel, params.conv2_bias, 1, Padding::kSame);
}

Tensor conv_refine(const PillarGrid& grid, const EnhancerParams& params) {
  return conv_refine(grid.data, params);
}

Tensor conv_refine_backward(const Tensor& x, const EnhancerParams& params, const Tensor& grad_out) {
  const Tensor c1 = conv2d(x, params.conv1_kernel, params.conv1_bias, 1, Padding::kSame);
  const Tensor bn = batch_norm2d(c1, params.conv1_bn);
  const Tensor act = relu(bn);
  const Tensor pooled = max_pool2d(act);
  Tensor g = conv2d_backward_input(pooled.shape(), params.conv2_kernel, 1, Padding::kSame, grad_out);
  g = max_pool2d_backward(act, g);
  g = relu_backward(bn, g);
  g = batch_norm_backward_inference(params.conv1_bn, g);
  return conv2d_backward_input(x.shape(), params.conv1_kernel, 1, Padding::kSame, g);
}

namespace {

template <typename Pillarize, typename Refine>
Tensor backbone_impl(const PanParams& params, const PanConfig& cfg, Rng& rng, bool training, Pillarize&& pillarize_fn,
                     Refine&& refine_fn) {
  cfg.validate();
  const PillarGrid grid = pillarize_fn();
  const TokenBatch tokens = gather(grid);
  const TokenBatch enhanced = enhance(tokens, params.enhancer, cfg.enhancer, rng, training);
  const PillarGrid sparse = scatter(enhanced, grid.height, grid.width);
  if (!cfg.enhancer.conv_enabled) return sparse.data;
  return refine_fn(sparse.data);
}

}  // namespace

Tensor pan_backbone(const PointCloud& pc, PanParams& params, const PanConfig& cfg, Rng& rng, bool training) {
  return backbone_impl(
      params, cfg, rng, training, [&] { return pillarize(pc, cfg.pillars, params.pfn, training); },
      [&](const Tensor& x) { return conv_refine(x, params.enhancer, training); });
}

Tensor pan_backbone(const PointCloud& pc, const PanParams& params, const PanConfig& cfg) {
  Rng unused(0);
  return backbone_impl(
      params, cfg, unused, false, [&] { return pillarize(pc, cfg.pillars, params.pfn); },
      [&](const Tensor& x) { return conv_refine(x, params.enhancer); });
}

WorkReport count_work(std::size_t pillar_count, const PanConfig& cfg) {
  cfg.validate();
  const std::uint64_t f = cfg.enhancer.embed_dim, c = cfg.pillars.out_channels;
  const std::uint64_t h = cfg.pillars.height(), w = cfg.pillars.width();
  const std::uint64_t k = cfg.enhancer.conv_kernel;
  // enc + q,k,v + (attn_out) + mlp1,mlp2 + dec per token
  const std::uint64_t per_token = c * f + (cfg.enhancer.use_attn_out ? 6 : 5) * f * f + f * c;
  const auto linear_for = [&](std::uint64_t p) { return p * per_token; };
  const auto pairwise_for = [&](std::uint64_t p) { return 2 * p * p * f; };

  WorkReport r;
  r.pillar_count = pillar_count;
  r.grid_cells = h * w;
  r.token_linear_macs = linear_for(pillar_count);
  r.token_pairwise_macs = pairwise_for(pillar_count);
  r.attention_macs = r.token_linear_macs + r.token_pairwise_macs;
  r.dense_linear_macs = linear_for(h * w);
  r.dense_pairwise_macs = pairwise_for(h * w);
  r.dense_equivalent_macs = r.dense_linear_macs + r.dense_pairwise_macs;
  if (cfg.enhancer.conv_enabled) {
    const std::uint64_t ph = (h + 1) / 2, pw = (w + 1) / 2;
    r.conv_macs = h * w * k * k * c * c + ph * pw * k * k * c * 3 * c;
  }
  return r;
}

WorkReport count_work(const PointCloud& pc, const PanConfig& cfg) {
  return count_work(count_pillars(pc, cfg.pillars), cfg);
}

namespace {

template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  auto lin = [&](const std::string& n, auto& l) {
    fn(n + ".weight", l.weight);
    fn(n + ".bias", l.bias);
  };
  auto bn = [&](const std::string& n, auto& b) {
    fn(n + ".gamma", b.gamma);
    fn(n + ".beta", b.beta);
    fn(n + ".running_mean", b.running_mean);
    fn(n + ".running_var", b.running_var);
  };
  lin("pfn.linear", p.pfn.linear);
  bn("pfn.norm", p.pfn.norm);
  auto& e = p.enhancer;
  lin("enhancer.enc", e.enc);
  lin("enhancer.q", e.q);
  lin("enhancer.k", e.k);
  lin("enhancer.v", e.v);
  lin("enhancer.attn_out", e.attn_out);
  lin("enhancer.mlp1", e.mlp1);
  lin("enhancer.mlp2", e.mlp2);
  fn("enhancer.ln.gamma", e.ln.gamma);
  fn("enhancer.ln.beta", e.ln.beta);
  lin("enhancer.dec", e.dec);
  fn("enhancer.conv1_kernel", e.conv1_kernel);
  fn("enhancer.conv1_bias", e.conv1_bias);
  bn("enhancer.conv1_bn", e.conv1_bn);
  fn("enhancer.conv2_kernel", e.conv2_kernel);
  fn("enhancer.conv2_bias", e.conv2_bias);
}

}  // namespace

void for_each_tensor(PanParams& params, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_tensors(params, fn);
}

void for_each_tensor(const PanParams& params,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_tensors(params, fn);
}

void save_params(std::ostream& out, const PanParams& params) {
  nlohmann::ordered_json doc;
  doc["format"] = "pan-params";
  doc["version"] = 1;
  auto& list = doc["tensors"] = nlohmann::ordered_json::array();
  for_each_tensor(params, [&](const std::string& name, const Tensor& t) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["values"] = t.storage();
    list.push_back(std::move(entry));
  });
  out << doc.dump() << '\n';
}

namespace {

PanParams params_from_json(const nlohmann::json& doc, const PanConfig& cfg) {
  Rng zero(0);
  PanParams params = init_pan_params(cfg, zero);
  std::set<std::string> filled;
  const auto& list = doc.at("tensors");
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& entry : list) by_name[entry.at("name").get<std::string>()] = &entry;
  for_each_tensor(params, [&](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("params: missing tensor " + name);
    const auto shape = it->second->at("shape").get<Shape>();
    if (shape != t.shape()) {
      throw FormatError("params: tensor " + name + " has shape " + shape_string(shape) + ", config expects " +
                        shape_string(t.shape()));
    }
    t = Tensor(shape, it->second->at("values").get<std::vector<double>>());
    filled.insert(name);
  });
  if (filled.size() != by_name.size()) throw FormatError("params: file contains unknown tensors");
  return params;
}

}  // namespace

PanParams load_params(std::istream& in, const PanConfig& cfg) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("params: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "pan-params" || doc.value("version", 0) != 1) {
    throw FormatError("params: expected format pan-params version 1");
  }
  try {
    return params_from_json(doc, cfg);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("params: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("params: ") + e.what());
  }
}

}  // namespace pan
