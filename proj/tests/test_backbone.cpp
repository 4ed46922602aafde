#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pan/backbone.hpp"
#include "pan/errors.hpp"
#include "pan/grad_check.hpp"
#include "pan/layers.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace pan;
using pan::testing::conv_oracle;
using pan::testing::dot;
using pan::testing::random_tensor;
using namespace pan::testing::oracles;

namespace {

EnhancerConfig small_enhancer(std::size_t f = 8, std::size_t heads = 1) {
  EnhancerConfig cfg;
  cfg.embed_dim = f;
  cfg.num_heads = heads;
  return cfg;
}

EnhancerParams random_enhancer(std::size_t c, const EnhancerConfig& cfg, Rng& rng) {
  EnhancerParams p = init_enhancer(c, cfg, rng);
  p.ln.gamma = random_tensor({cfg.embed_dim}, rng, 0.5, 1.5);
  p.ln.beta = random_tensor({cfg.embed_dim}, rng, -0.5, 0.5);
  p.conv1_bn.gamma = random_tensor({c}, rng, 0.5, 1.5);
  p.conv1_bn.beta = random_tensor({c}, rng, -0.5, 0.5);
  p.conv1_bn.running_mean = random_tensor({c}, rng, -0.5, 0.5);
  p.conv1_bn.running_var = random_tensor({c}, rng, 0.5, 1.5);
  return p;
}

PanConfig small_pan(std::size_t cells = 8, std::size_t c = 4, std::size_t f = 8) {
  PanConfig cfg;
  cfg.pillars.x_min = cfg.pillars.y_min = -static_cast<double>(cells) / 2.0;
  cfg.pillars.x_max = cfg.pillars.y_max = static_cast<double>(cells) / 2.0;
  cfg.pillars.pillar_size = 1.0;
  cfg.pillars.out_channels = c;
  cfg.enhancer.embed_dim = f;
  return cfg;
}

PointCloud random_cloud(Rng& rng, std::size_t n, double extent) {
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) {
    RadarPoint p;
    p.x = rng.uniform(-extent, extent);
    p.y = rng.uniform(-extent, extent);
    p.vx = rng.normal();
    p.vy = rng.normal();
    p.rcs = rng.normal(0, 3);
    p.sweep_index = static_cast<std::uint32_t>(rng.below(6));
    p.sweep_offset = 0.075 * p.sweep_index;
    pc.points.push_back(p);
  }
  return pc;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST(EnhancerConfig, Validation) {
  EnhancerConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.embed_dim, 128u);
  EXPECT_EQ(cfg.num_heads, 1u);
  EXPECT_EQ(cfg.head_dim(), 128u);
  cfg.num_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = EnhancerConfig{};
  cfg.dropout_p = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = EnhancerConfig{};
  cfg.conv_kernel = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EnhancerParams, ShapesAsDeclared) {
  Rng rng(1);
  const EnhancerParams p = init_enhancer(4, small_enhancer(8), rng);
  EXPECT_EQ(p.enc.weight.shape(), (Shape{4, 8}));
  EXPECT_EQ(p.q.weight.shape(), (Shape{8, 8}));
  EXPECT_EQ(p.dec.weight.shape(), (Shape{8, 4}));
  EXPECT_EQ(p.conv1_kernel.shape(), (Shape{3, 3, 4, 4}));
  EXPECT_EQ(p.conv2_kernel.shape(), (Shape{3, 3, 4, 12}));
  EXPECT_EQ(p.conv2_bias.shape(), (Shape{12}));
}

// ---------------------------------------------------------------- self-attention

TEST(SelfAttention, EmptyInput) {
  Rng rng(1);
  const EnhancerConfig cfg = small_enhancer();
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  EXPECT_EQ(self_attention(Tensor({0, 8}), p, cfg, rng, false).shape(), (Shape{0, 8}));
}

TEST(SelfAttention, SingleTokenAttendsToItself) {
  Rng rng(2);
  const EnhancerConfig cfg = small_enhancer();
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  const Tensor x = random_tensor({1, 8}, rng);
  AttentionTrace trace;
  const Tensor y = self_attention(x, p, cfg, rng, false, &trace);
  ASSERT_EQ(trace.weights.size(), 1u);
  EXPECT_EQ(trace.weights[0].at(0, 0), 1.0);
  EXPECT_EQ(y, linear(linear(x, p.v), p.attn_out));
}

TEST(SelfAttention, IdenticalTokensGiveIdenticalOutputs) {
  Rng rng(3);
  const EnhancerConfig cfg = small_enhancer();
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  const Tensor row = random_tensor({1, 8}, rng);
  Tensor x({3, 8});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) x.at(i, j) = row[j];
  const Tensor y = self_attention(x, p, cfg, rng, false);
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(y.at(i, j), y.at(0, j));
}

TEST(SelfAttention, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t heads = 1 + rng.below(2);
    const std::size_t f = heads * (1 + rng.below(16 / heads));
    EnhancerConfig cfg = small_enhancer(f, heads);
    cfg.use_attn_out = rng.bernoulli(0.8);
    const EnhancerParams p = init_enhancer(3, cfg, rng);
    const Tensor x = random_tensor({1 + rng.below(8), f}, rng, -2, 2);
    EXPECT_LE(mat_diff(self_attention(x, p, cfg, rng, false), attention_oracle(to_mat(x), p, cfg)), 1e-10)
        << "seed " << seed;
  }
}

TEST(SelfAttention, WeightRowsSumToOne) {
  Rng rng(4);
  const EnhancerConfig cfg = small_enhancer(8, 2);
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  AttentionTrace trace;
  self_attention(random_tensor({7, 8}, rng, -3, 3), p, cfg, rng, true, &trace);
  ASSERT_EQ(trace.weights.size(), 2u);
  for (const Tensor& w : trace.weights) {
    ASSERT_EQ(w.shape(), (Shape{7, 7}));
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0;
      for (double v : w.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(SelfAttention, InferenceIgnoresDropout) {
  Rng rng(5), a(1), b(2);
  EnhancerConfig cfg = small_enhancer();
  cfg.dropout_p = 0.5;
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  const Tensor x = random_tensor({5, 8}, rng);
  EXPECT_EQ(self_attention(x, p, cfg, a, false), self_attention(x, p, cfg, b, false));
}

TEST(SelfAttention, DropoutBeforeSoftmaxActsOnScores) {
  Rng rng(6);
  EnhancerConfig cfg = small_enhancer();
  cfg.dropout_p = 0.4;
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  const Tensor x = random_tensor({6, 8}, rng, -2, 2);
  AttentionTrace trace;
  Rng drop(77);
  self_attention(x, p, cfg, drop, true, &trace);
  const Tensor scores = matmul_transposed(linear(x, p.q), linear(x, p.k)) * (1.0 / std::sqrt(8.0));
  // Each weight is exp(s')/Z with s' either 0 (dropped) or s/(1-p) (kept).
  const Tensor& w = trace.weights[0];
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    bool row_ok = false;
    for (const double first : {0.0, scores.at(i, 0) / 0.6}) {
      const double log_z = first - std::log(w.at(i, 0));
      bool ok = true;
      std::size_t row_dropped = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        const double s_prime = std::log(w.at(i, j)) + log_z;
        const bool is_zero = std::abs(s_prime) < 1e-9;
        const bool is_kept = std::abs(s_prime - scores.at(i, j) / 0.6) < 1e-9;
        ok = ok && (is_zero || is_kept);
        row_dropped += is_zero && !is_kept;
      }
      if (ok) {
        row_ok = true;
        dropped += row_dropped;
        break;
      }
    }
    EXPECT_TRUE(row_ok) << "row " << i;
  }
  EXPECT_GT(dropped, 0u);
}

TEST(SelfAttention, DropoutPlacementsDiffer) {
  Rng rng(7);
  EnhancerConfig before = small_enhancer(), after = small_enhancer();
  before.dropout_p = after.dropout_p = 0.3;
  after.dropout_after_softmax = true;
  const EnhancerParams p = init_enhancer(4, before, rng);
  const Tensor x = random_tensor({6, 8}, rng);
  Rng r1(9), r2(9), r3(9), r4(9);
  const Tensor yb = self_attention(x, p, before, r1, true);
  const Tensor ya = self_attention(x, p, after, r2, true);
  EXPECT_NE(yb, ya);
  EXPECT_EQ(yb, self_attention(x, p, before, r3, true));
  EXPECT_EQ(ya, self_attention(x, p, after, r4, true));
  // Without dropout the placements coincide.
  before.dropout_p = after.dropout_p = 0.0;
  EXPECT_EQ(self_attention(x, p, before, r1, true), self_attention(x, p, after, r2, true));
}

TEST(SelfAttention, RejectsWrongWidth) {
  Rng rng(8);
  const EnhancerConfig cfg = small_enhancer();
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  EXPECT_THROW(self_attention(Tensor({3, 7}), p, cfg, rng, false), DimensionError);
  EXPECT_THROW(self_attention(Tensor({8}), p, cfg, rng, false), DimensionError);
}

// ---------------------------------------------------------------- enhance

TEST(Enhance, EmptyBatchPassesThrough) {
  Rng rng(1);
  const EnhancerConfig cfg = small_enhancer();
  const EnhancerParams p = init_enhancer(4, cfg, rng);
  const TokenBatch out = enhance(TokenBatch{Tensor({0, 4}), {}}, p, cfg, rng, false);
  EXPECT_EQ(out.size(), 0u);
  EXPECT_EQ(out.tokens.shape(), (Shape{0, 4}));
}

TEST(Enhance, ZeroWeightsGiveZeros) {
  Rng rng(2);
  const EnhancerConfig cfg = small_enhancer();
  PanConfig pc_cfg = small_pan();
  PanParams params = init_pan_params(pc_cfg, rng);
  for_each_tensor(params, [](const std::string&, Tensor& t) { t = Tensor(t.shape()); });
  const Tensor y = enhance_tokens(random_tensor({5, 4}, rng), params.enhancer, cfg, rng, false);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Enhance, MatchesStraightLineReference) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    const std::size_t heads = 1 + rng.below(2);
    EnhancerConfig cfg = small_enhancer(4 * heads, heads);
    const EnhancerParams p = random_enhancer(3, cfg, rng);
    const Tensor x = random_tensor({5, 3}, rng, -2, 2);
    EXPECT_LE(mat_diff(enhance_tokens(x, p, cfg, rng, false), enhance_oracle(to_mat(x), p, cfg)), 1e-10);
  }
}

TEST(Enhance, PermutationEquivariance) {
  Rng rng(3);
  const EnhancerConfig cfg = small_enhancer(8, 2);
  const EnhancerParams p = random_enhancer(4, cfg, rng);
  const std::size_t n = 9;
  const Tensor x = random_tensor({n, 4}, rng, -2, 2);
  const Tensor y = enhance_tokens(x, p, cfg, rng, false);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    Tensor xp({n, 4});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 4; ++j) xp.at(i, j) = x.at(perm[i], j);
    const Tensor yp = enhance_tokens(xp, p, cfg, rng, false);
    double d = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 4; ++j) d = std::max(d, std::abs(yp.at(i, j) - y.at(perm[i], j)));
    ASSERT_LE(d, 1e-10);
  }
}

TEST(Enhance, KeepsCoordinatesAndSparsity) {
  Rng rng(4);
  const EnhancerConfig cfg = small_enhancer();
  const EnhancerParams p = random_enhancer(3, cfg, rng);
  PillarGrid g = PillarGrid::empty(6, 6, 3);
  for (std::size_t cell : {3u, 10u, 22u, 35u}) {
    g.mask[cell] = 1;
    for (std::size_t k = 0; k < 3; ++k) g.data.at(cell / 6, cell % 6, k) = rng.uniform(-1, 1);
  }
  g.pillar_count = 4;
  const TokenBatch tb = gather(g);
  const TokenBatch out = enhance(tb, p, cfg, rng, false);
  EXPECT_EQ(out.coords, tb.coords);
  const PillarGrid back = scatter(out, 6, 6);
  EXPECT_EQ(back.mask, g.mask);
  for (std::size_t i = 0; i < 36; ++i)
    if (!g.mask[i])
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(back.data.at(i / 6, i % 6, k), 0.0);
}

// ---------------------------------------------------------------- gradients

TEST(Gradients, SelfAttention) {
  for (std::size_t heads : {1u, 2u}) {
    for (bool use_out : {true, false}) {
      Rng rng(10 + heads);
      EnhancerConfig cfg = small_enhancer(6, heads);
      cfg.use_attn_out = use_out;
      const EnhancerParams p = init_enhancer(3, cfg, rng);
      const Tensor x = random_tensor({5, 6}, rng, -1.5, 1.5), g = random_tensor({5, 6}, rng);
      Rng unused(0);
      const Differentiable f{[&](const Tensor& t) { return dot(self_attention(t, p, cfg, unused, false), g); },
                             [&](const Tensor& t) { return self_attention_backward(t, p, cfg, g); }};
      EXPECT_LT(grad_check(f, x), 1e-5);
    }
  }
}

TEST(Gradients, Enhance) {
  Rng rng(12);
  const EnhancerConfig cfg = small_enhancer(6, 2);
  const EnhancerParams p = random_enhancer(4, cfg, rng);
  const Tensor x = random_tensor({6, 4}, rng, -1.5, 1.5), g = random_tensor({6, 4}, rng);
  Rng unused(0);
  const Differentiable f{[&](const Tensor& t) { return dot(enhance_tokens(t, p, cfg, unused, false), g); },
                         [&](const Tensor& t) { return enhance_tokens_backward(t, p, cfg, g); }};
  EXPECT_LT(grad_check(f, x), 1e-5);
}

TEST(Gradients, ConvRefine) {
  Rng rng(13);
  const EnhancerConfig cfg = small_enhancer();
  const EnhancerParams p = random_enhancer(2, cfg, rng);
  const Tensor x = random_tensor({6, 6, 2}, rng), g = random_tensor({3, 3, 6}, rng);
  const Differentiable f{[&](const Tensor& t) { return dot(conv_refine(t, p), g); },
                         [&](const Tensor& t) { return conv_refine_backward(t, p, g); }};
  EXPECT_LT(grad_check(f, x), 1e-5);
}

// ---------------------------------------------------------------- conv_refine

TEST(ConvRefine, ZeroGridBiasFree) {
  Rng rng(1);
  PanConfig cfg = small_pan(8, 4);
  PanParams params = init_pan_params(cfg, rng);
  zero_biases(params);
  const Tensor y = conv_refine(PillarGrid::empty(8, 8, 4), params.enhancer);
  EXPECT_EQ(y, Tensor({4, 4, 12}));
}

TEST(ConvRefine, HalvesAndTriples) {
  Rng rng(2);
  const EnhancerParams p = init_enhancer(4, small_enhancer(), rng);
  EXPECT_EQ(conv_refine(random_tensor({8, 8, 4}, rng), p).shape(), (Shape{4, 4, 12}));
  EXPECT_EQ(conv_refine(random_tensor({7, 5, 4}, rng), p).shape(), (Shape{4, 3, 12}));
}

TEST(ConvRefine, MatchesLoopComposition) {
  Rng rng(3);
  const EnhancerParams p = random_enhancer(2, small_enhancer(), rng);
  const Tensor x = random_tensor({8, 8, 2}, rng);
  Tensor c1 = conv_oracle(x, p.conv1_kernel, p.conv1_bias, 1, 1);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    const std::size_t ch = i % 2;
    const double v = (c1[i] - p.conv1_bn.running_mean[ch]) / std::sqrt(p.conv1_bn.running_var[ch] + p.conv1_bn.eps) *
                         p.conv1_bn.gamma[ch] +
                     p.conv1_bn.beta[ch];
    c1[i] = std::max(0.0, v);
  }
  Tensor pooled({4, 4, 2});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 2; ++c)
        pooled.at(i, j, c) = std::max({c1.at(2 * i, 2 * j, c), c1.at(2 * i + 1, 2 * j, c), c1.at(2 * i, 2 * j + 1, c),
                                       c1.at(2 * i + 1, 2 * j + 1, c)});
  const Tensor expected = conv_oracle(pooled, p.conv2_kernel, p.conv2_bias, 1, 1);
  EXPECT_LE(max_abs_diff(conv_refine(x, p), expected), 1e-10);
}

TEST(ConvRefine, TrainingUpdatesBatchNorm) {
  Rng rng(4);
  EnhancerParams p = init_enhancer(3, small_enhancer(), rng);
  const Tensor before = p.conv1_bn.running_var;
  conv_refine(random_tensor({6, 6, 3}, rng), p, true);
  EXPECT_NE(p.conv1_bn.running_var, before);
}

// ---------------------------------------------------------------- backbone

TEST(Backbone, EmptyCloudBiasFreeIsZero) {
  Rng rng(1);
  const PanConfig cfg = small_pan(8, 4);
  PanParams params = init_pan_params(cfg, rng);
  zero_biases(params);
  const Tensor y = pan_backbone(PointCloud{}, params, cfg);
  EXPECT_EQ(y, Tensor({4, 4, 12}));
}

TEST(Backbone, EmptyCloudHasCorrectShape) {
  Rng rng(2);
  const PanConfig cfg = small_pan(8, 4);
  const PanParams params = init_pan_params(cfg, rng);
  EXPECT_EQ(pan_backbone(PointCloud{}, params, cfg).shape(), (Shape{4, 4, 12}));
}

TEST(Backbone, SinglePointReceptiveField) {
  const PanConfig cfg = small_pan(16, 3);
  int nonzero_runs = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    PanParams params = init_pan_params(cfg, rng);
    zero_biases(params);
    const long row = static_cast<long>(rng.below(16)), col = static_cast<long>(rng.below(16));
    PointCloud pc;
    RadarPoint p;
    p.x = cfg.pillars.x_min + static_cast<double>(col) + 0.5;
    p.y = cfg.pillars.y_min + static_cast<double>(row) + 0.5;
    p.vx = 3.0;
    p.rcs = 5.0;
    pc.points.push_back(p);
    const Tensor y = pan_backbone(pc, params, cfg);
    // conv1 reaches +-1 cell, pooling maps cell r to r/2, conv2 reaches +-1 pooled cell.
    const auto lo = [](long r) { return (std::max(r - 1, 0L)) / 2 - 1; };
    const auto hi = [](long r) { return (r + 1) / 2 + 1; };
    bool any = false;
    for (long i = 0; i < 8; ++i)
      for (long j = 0; j < 8; ++j)
        for (std::size_t c = 0; c < 9; ++c) {
          const double v = y.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), c);
          any = any || v != 0.0;
          if (i < lo(row) || i > hi(row) || j < lo(col) || j > hi(col)) {
            ASSERT_EQ(v, 0.0) << "seed " << seed << " cell " << i << "," << j;
          }
        }
    nonzero_runs += any;
  }
  // The PFN relu can zero a lone pillar; most seeds must still produce a signal.
  EXPECT_GE(nonzero_runs, 5);
}

TEST(Backbone, DeterministicForFixedSeed) {
  const PanConfig cfg = small_pan(8, 4);
  Rng init(3);
  const PanParams params = init_pan_params(cfg, init);
  Rng data(4);
  const PointCloud pc = random_cloud(data, 40, 4.0);
  EXPECT_EQ(pan_backbone(pc, params, cfg), pan_backbone(pc, params, cfg));
  PanParams a = params, b = params;
  Rng ra(5), rb(5);
  EXPECT_EQ(pan_backbone(pc, a, cfg, ra, true), pan_backbone(pc, b, cfg, rb, true));
}

TEST(Backbone, ShapeLaw) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t cells = 2 + rng.below(15), c = 1 + rng.below(4), f = 2 * (1 + rng.below(4));
    PanConfig cfg = small_pan(cells, c, f);
    cfg.enhancer.num_heads = 1 + rng.below(2);
    const PanParams params = init_pan_params(cfg, rng);
    const PointCloud pc = random_cloud(rng, rng.below(30), static_cast<double>(cells) / 2.0 + 1.0);
    const Tensor y = pan_backbone(pc, params, cfg);
    EXPECT_EQ(y.shape(), (Shape{(cells + 1) / 2, (cells + 1) / 2, 3 * c}));
    EXPECT_EQ(y.shape(), cfg.output_shape());
    cfg.enhancer.conv_enabled = false;
    const Tensor z = pan_backbone(pc, params, cfg);
    EXPECT_EQ(z.shape(), (Shape{cells, cells, c}));
  }
}

TEST(Backbone, NoConvEqualsScatteredEnhancement) {
  Rng rng(7);
  PanConfig cfg = small_pan(8, 4);
  cfg.enhancer.conv_enabled = false;
  const PanParams params = init_pan_params(cfg, rng);
  const PointCloud pc = random_cloud(rng, 25, 4.0);
  const PillarGrid grid = pillarize(pc, cfg.pillars, params.pfn);
  Rng unused(0);
  const PillarGrid expected =
      scatter(enhance(gather(grid), params.enhancer, cfg.enhancer, unused, false), grid.height, grid.width);
  EXPECT_EQ(pan_backbone(pc, params, cfg), expected.data);
  cfg.enhancer.conv_enabled = true;
  EXPECT_EQ(pan_backbone(pc, params, cfg), conv_refine(expected.data, params.enhancer));
}

// ---------------------------------------------------------------- work counting

TEST(CountWork, HandComputed) {
  const PanConfig cfg = small_pan(4, 4, 8);  // H = W = 4, C = 4, f = 8
  const WorkReport r = count_work(3, cfg);
  EXPECT_EQ(r.token_linear_macs, 3u * (4 * 8 + 6 * 64 + 8 * 4));
  EXPECT_EQ(r.token_pairwise_macs, 2u * 9 * 8);
  EXPECT_EQ(r.attention_macs, r.token_linear_macs + r.token_pairwise_macs);
  EXPECT_EQ(r.dense_equivalent_macs, 16u * 448 + 2u * 256 * 8);
  EXPECT_EQ(r.conv_macs, 16u * 9 * 16 + 4u * 9 * 4 * 12);
}

TEST(CountWork, ZeroPillars) {
  const WorkReport r = count_work(std::size_t{0}, small_pan());
  EXPECT_EQ(r.attention_macs, 0u);
  EXPECT_EQ(r.ratio(), 0.0);
}

TEST(CountWork, FullGridEqualsDense) {
  const PanConfig cfg = small_pan(8);
  const WorkReport r = count_work(64, cfg);
  EXPECT_EQ(r.attention_macs, r.dense_equivalent_macs);
  EXPECT_EQ(r.ratio(), 1.0);
}

TEST(CountWork, FivePercentFillOnDefaultGrid) {
  PanConfig cfg;  // 128 x 128, f = 128
  const std::size_t cells = 128 * 128;
  const std::size_t p = cells / 20;
  const WorkReport r = count_work(p, cfg);
  const double fill = static_cast<double>(p) / static_cast<double>(cells);
  EXPECT_LT(static_cast<double>(r.token_pairwise_macs) / static_cast<double>(r.dense_pairwise_macs), 0.01);
  EXPECT_DOUBLE_EQ(static_cast<double>(r.token_linear_macs) / static_cast<double>(r.dense_linear_macs), fill);
  EXPECT_LE(r.ratio(), 0.05);
}

TEST(CountWork, MonotoneInPoints) {
  const PanConfig cfg = small_pan(16);
  Rng rng(8);
  PointCloud pc;
  std::uint64_t last = 0;
  for (int i = 0; i < 200; ++i) {
    pc.points.push_back(random_cloud(rng, 1, 9.0).points[0]);
    const WorkReport r = count_work(pc, cfg);
    EXPECT_GE(r.attention_macs, last);
    last = r.attention_macs;
  }
}

// ---------------------------------------------------------------- parameter files

TEST(Params, SaveLoadRoundTrip) {
  const PanConfig cfg = small_pan(8, 4);
  Rng rng(9);
  const PanParams params = init_pan_params(cfg, rng);
  std::stringstream ss;
  save_params(ss, params);
  const PanParams back = load_params(ss, cfg);
  std::vector<Tensor> a, b;
  for_each_tensor(params, [&](const std::string&, const Tensor& t) { a.push_back(t); });
  for_each_tensor(back, [&](const std::string&, const Tensor& t) { b.push_back(t); });
  EXPECT_EQ(a, b);
  std::stringstream again;
  save_params(again, back);
  std::stringstream first;
  save_params(first, params);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Params, TensorOrderIsFixed) {
  const PanConfig cfg = small_pan();
  Rng rng(10);
  const PanParams params = init_pan_params(cfg, rng);
  std::vector<std::string> names;
  for_each_tensor(params, [&](const std::string& n, const Tensor&) { names.push_back(n); });
  ASSERT_EQ(names.size(), 32u);
  EXPECT_EQ(names.front(), "pfn.linear.weight");
  EXPECT_EQ(names[6], "enhancer.enc.weight");
  EXPECT_EQ(names.back(), "enhancer.conv2_bias");
}

TEST(Params, LoadErrors) {
  const PanConfig cfg = small_pan(8, 4);
  Rng rng(11);
  std::stringstream ss;
  save_params(ss, init_pan_params(cfg, rng));
  const std::string text = ss.str();
  PanConfig other = cfg;
  other.pillars.out_channels = 5;
  std::stringstream s1(text);
  EXPECT_THROW(load_params(s1, other), FormatError);
  std::stringstream s2("not json");
  EXPECT_THROW(load_params(s2, cfg), FormatError);
  std::stringstream s3(R"({"format":"pan-params","version":1,"tensors":[]})");
  EXPECT_THROW(load_params(s3, cfg), FormatError);
  std::stringstream s4(R"({"format":"other","version":1,"tensors":[]})");
  EXPECT_THROW(load_params(s4, cfg), FormatError);
  std::stringstream s5("[1,2]");
  EXPECT_THROW(load_params(s5, cfg), FormatError);
  std::stringstream s6(R"({"format":"pan-params","version":1})");
  EXPECT_THROW(load_params(s6, cfg), FormatError);
}
