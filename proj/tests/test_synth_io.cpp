#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "pan/config.hpp"
#include "pan/errors.hpp"
#include "pan/io.hpp"
#include "pan/synth.hpp"
#include "test_helpers.hpp"

using namespace pan;
using nlohmann::json;

namespace {

SceneSpec quiet_scene() {
  SceneSpec s;
  s.clutter_rate = 0.0;
  return s;
}

std::string points_text(std::span<const PointCloud> clouds) {
  std::ostringstream out;
  write_points_jsonl(out, clouds);
  return out.str();
}

std::string boxes_text(std::span<const FrameAnnotations> frames) {
  std::ostringstream out;
  write_boxes_jsonl(out, frames);
  return out.str();
}

// Frames of well separated cars laid out on a ring.
std::vector<FrameAnnotations> ring_frames(std::size_t frames, std::size_t per_frame, const PerturbSpec& perturb,
                                          Rng& rng) {
  std::vector<FrameAnnotations> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    out[f].frame_id = frame_name(f);
    for (std::size_t k = 0; k < per_frame; ++k) {
      const double th = 2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(per_frame);
      Box3D b;
      b.cx = 40 * std::cos(th);
      b.cy = 40 * std::sin(th);
      const auto [w, l, h] = class_size(ObjectClass::kCar);
      b.w = w;
      b.l = l;
      b.h = h;
      b.attribute = Attribute::kVehicleMoving;
      out[f].gt.push_back(b);
    }
    out[f].pred = perturb_to_predictions(out[f].gt, perturb, rng);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- scenes

TEST(Scene, EmptySpecGivesEmptyScene) {
  SceneSpec s = quiet_scene();
  s.n_objects = 0;
  Rng rng(1);
  const SceneSample sample = generate_scene(s, rng);
  EXPECT_TRUE(sample.cloud.points.empty());
  EXPECT_TRUE(sample.gt.empty());
  EXPECT_TRUE(sample.point_owner.empty());
}

TEST(Scene, Deterministic) {
  Rng a(42), b(42);
  const SceneSample x = generate_scene(SceneSpec{}, a);
  const SceneSample y = generate_scene(SceneSpec{}, b);
  EXPECT_EQ(x.gt, y.gt);
  const std::vector<PointCloud> cx = {x.cloud}, cy = {y.cloud};
  EXPECT_EQ(points_text(cx), points_text(cy));
  EXPECT_EQ(x.point_owner, y.point_owner);
}

TEST(Scene, StaticObjectHasNoRadialVelocity) {
  SceneSpec s = quiet_scene();
  s.n_objects = 1;
  s.class_mix = {{ObjectClass::kBarrier, 1.0}};
  s.min_range = 9.999;
  s.max_range = 10.001;
  s.velocity_sigma = 0.1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const SceneSample sample = generate_scene(s, rng);
    ASSERT_EQ(sample.gt.size(), 1u);
    EXPECT_NEAR(sample.gt[0].range(), 10.0, 0.002);
    EXPECT_EQ(sample.gt[0].vx, 0.0);
    ASSERT_FALSE(sample.cloud.points.empty());
    for (const RadarPoint& p : sample.cloud.points) {
      const double r = std::hypot(p.x, p.y);
      EXPECT_LT(std::abs((p.vx * p.x + p.vy * p.y) / r), 5 * s.velocity_sigma);
    }
  }
}

TEST(Scene, DopplerIsRadialProjection) {
  SceneSpec s = quiet_scene();
  s.velocity_sigma = 0.0;
  s.min_speed = 3.0;
  Rng rng(7);
  const SceneSample sample = generate_scene(s, rng);
  for (std::size_t i = 0; i < sample.cloud.points.size(); ++i) {
    const RadarPoint& p = sample.cloud.points[i];
    const Box3D& b = sample.gt[static_cast<std::size_t>(sample.point_owner[i])];
    const double r = std::hypot(p.x, p.y), rx = p.x / r, ry = p.y / r;
    const double radial = b.vx * rx + b.vy * ry;
    EXPECT_NEAR(p.vx, radial * rx, 1e-12);
    EXPECT_NEAR(p.vy, radial * ry, 1e-12);
  }
}

TEST(Scene, BoxesInRangeAndReturnsOnFootprints) {
  const SceneSpec s;
  const double slack = 3 * s.position_sigma * std::sqrt(2.0) + 1e-9;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const SceneSample sample = generate_scene(s, rng);
    ASSERT_EQ(sample.gt.size(), s.n_objects);
    ASSERT_EQ(sample.point_owner.size(), sample.cloud.points.size());
    for (const Box3D& b : sample.gt) {
      EXPECT_GE(b.range(), s.min_range);
      EXPECT_LE(b.range(), s.max_range);
      EXPECT_GT(b.w, 0.0);
    }
    for (std::size_t i = 0; i < sample.gt.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        EXPECT_GT(center_distance(sample.gt[i], sample.gt[j]),
                  0.5 * (std::hypot(sample.gt[i].w, sample.gt[i].l) + std::hypot(sample.gt[j].w, sample.gt[j].l)));
    std::size_t owned = 0;
    for (std::size_t i = 0; i < sample.cloud.points.size(); ++i) {
      const RadarPoint& p = sample.cloud.points[i];
      EXPECT_LT(p.sweep_index, s.n_sweeps);
      EXPECT_NEAR(p.sweep_offset, p.sweep_index * s.sweep_interval, 1e-15);
      if (sample.point_owner[i] < 0) continue;
      ++owned;
      const Box3D& b = sample.gt[static_cast<std::size_t>(sample.point_owner[i])];
      const double cx = b.cx - b.vx * p.sweep_offset, cy = b.cy - b.vy * p.sweep_offset;
      const double dx = p.x - cx, dy = p.y - cy;
      const double along = dx * std::cos(b.yaw) + dy * std::sin(b.yaw);
      const double across = -dx * std::sin(b.yaw) + dy * std::cos(b.yaw);
      EXPECT_LE(std::abs(along), b.l / 2 + slack);
      EXPECT_LE(std::abs(across), b.w / 2 + slack);
      EXPECT_GE(p.z, b.cz - b.h / 2);
      EXPECT_LE(p.z, b.cz + b.h / 2);
    }
    EXPECT_GE(owned, s.n_objects * s.n_sweeps * s.min_points_per_object);
  }
}

TEST(Scene, ClutterIsUnowned) {
  SceneSpec s;
  s.n_objects = 0;
  s.clutter_rate = 0.01;
  Rng rng(3);
  const SceneSample sample = generate_scene(s, rng);
  EXPECT_GT(sample.cloud.points.size(), 0u);
  for (int o : sample.point_owner) EXPECT_EQ(o, -1);
  for (const RadarPoint& p : sample.cloud.points) {
    EXPECT_LE(std::abs(p.x), s.clutter_half_extent);
    EXPECT_LE(std::abs(p.y), s.clutter_half_extent);
  }
}

TEST(Scene, InfeasiblePlacementThrows) {
  SceneSpec s = quiet_scene();
  s.n_objects = 50;
  s.class_mix = {{ObjectClass::kBus, 1.0}};
  s.min_range = 2.0;
  s.max_range = 10.0;
  s.max_placement_attempts = 200;
  Rng rng(4);
  EXPECT_THROW(generate_scene(s, rng), GenerationError);
}

TEST(Scene, InvalidSpecThrows) {
  SceneSpec s;
  s.max_range = s.min_range;
  Rng rng(5);
  EXPECT_THROW(generate_scene(s, rng), ConfigError);
  s = SceneSpec{};
  s.class_mix = {{ObjectClass::kCar, 0.0}};
  EXPECT_THROW(generate_scene(s, rng), ConfigError);
  s = SceneSpec{};
  s.n_sweeps = 0;
  EXPECT_THROW(generate_scene(s, rng), ConfigError);
}

// ---------------------------------------------------------------- perturbation

TEST(Perturb, IdentityIsPerfect) {
  Rng rng(6);
  PerturbSpec p;
  const auto frames = ring_frames(10, 12, p, rng);
  for (const auto& f : frames) {
    ASSERT_EQ(f.pred.size(), f.gt.size());
    for (std::size_t i = 0; i < f.gt.size(); ++i) {
      Box3D g = f.gt[i];
      g.score = f.pred[i].score;
      EXPECT_EQ(f.pred[i], g);
    }
  }
  const MetricsReport r = evaluate(frames, EvalConfig{});
  EXPECT_DOUBLE_EQ(r.mean_ap, 1.0);
  for (double e : r.mean_tp) EXPECT_EQ(e, 0.0);
  EXPECT_DOUBLE_EQ(r.nds, 1.0);
}

TEST(Perturb, DropEverythingGivesZeroAp) {
  Rng rng(7);
  PerturbSpec p;
  p.drop_probability = 1.0;
  const auto frames = ring_frames(3, 5, p, rng);
  for (const auto& f : frames) EXPECT_TRUE(f.pred.empty());
  EXPECT_EQ(evaluate(frames, EvalConfig{}).mean_ap, 0.0);
}

TEST(Perturb, TranslationMonteCarloAte) {
  // Isotropic 2D Gaussian offset with per-axis sigma s has mean length s * sqrt(pi / 2).
  Rng rng(8);
  PerturbSpec p;
  p.translation_sigma = 0.2;
  const auto frames = ring_frames(100, 100, p, rng);
  const ClassAccumulation acc = accumulate(frames, ObjectClass::kCar, 2.0);
  ASSERT_EQ(acc.matched.size(), 10000u);
  const double ate = tp_errors(acc.matched, ObjectClass::kCar)[kATE];
  const double expected = 0.2 * std::sqrt(std::numbers::pi / 2);
  EXPECT_NEAR(ate, expected, 0.05 * expected);
}

TEST(Perturb, FalsePositivesAndFlips) {
  Rng rng(9);
  PerturbSpec p;
  p.fp_rate = 5.0;
  p.attribute_flip_probability = 1.0;
  std::size_t fps = 0, flips = 0, kept = 0;
  for (int t = 0; t < 100; ++t) {
    const auto frames = ring_frames(1, 4, p, rng);
    const auto& f = frames[0];
    for (std::size_t i = 0; i < f.pred.size(); ++i) {
      const Box3D& b = f.pred[i];
      if (i < f.gt.size()) {
        ++kept;
        flips += b.attribute != f.gt[i].attribute;
        EXPECT_GE(b.score, p.tp_score_min);
      } else {
        ++fps;
        EXPECT_LE(b.range(), p.fp_max_range);
        EXPECT_LE(b.score, p.fp_score_max);
      }
    }
  }
  EXPECT_EQ(flips, kept);
  EXPECT_NEAR(static_cast<double>(fps) / 100.0, 5.0, 1.0);
}

TEST(Perturb, InvalidSpecThrows) {
  PerturbSpec p;
  p.drop_probability = 1.5;
  Rng rng(10);
  EXPECT_THROW(perturb_to_predictions({}, p, rng), ConfigError);
}

// ---------------------------------------------------------------- datasets

TEST(Dataset, DeterministicAndCycled) {
  DatasetSpec spec;
  spec.frames = 4;
  spec.perturb = PerturbSpec{};
  spec.perturb->translation_sigma = 0.3;
  spec.condition_cycle = {Condition::kDay, Condition::kNight};
  const Dataset a = generate_dataset(spec, 77), b = generate_dataset(spec, 77);
  EXPECT_EQ(points_text(a.clouds), points_text(b.clouds));
  EXPECT_EQ(boxes_text(a.annotations), boxes_text(b.annotations));
  EXPECT_NE(boxes_text(a.annotations), boxes_text(generate_dataset(spec, 78).annotations));
  ASSERT_EQ(a.annotations.size(), 4u);
  EXPECT_EQ(a.annotations[1].frame_id, "frame_0001");
  EXPECT_EQ(a.annotations[1].condition, Condition::kNight);
  EXPECT_EQ(a.annotations[2].condition, Condition::kDay);
}

// ---------------------------------------------------------------- JSONL

TEST(Jsonl, FormatDouble) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-0.0), "0");
  EXPECT_EQ(format_double(1e-7), "1e-07");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_THROW(format_double(std::nan("")), FormatError);
  EXPECT_THROW(format_double(INFINITY), FormatError);
}

TEST(Jsonl, PointsRoundTripIsByteIdentical) {
  DatasetSpec spec;
  spec.frames = 3;
  const Dataset d = generate_dataset(spec, 5);
  const std::string first = points_text(d.clouds);
  std::istringstream in(first);
  const auto back = read_points_jsonl(in);
  EXPECT_EQ(points_text(back), first);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].points, d.clouds[0].points);
}

TEST(Jsonl, BoxesRoundTripIsByteIdentical) {
  DatasetSpec spec;
  spec.frames = 3;
  spec.perturb = PerturbSpec{};
  spec.perturb->translation_sigma = 0.2;
  spec.perturb->fp_rate = 2.0;
  spec.perturb->attribute_flip_probability = 0.3;
  spec.condition_cycle = {Condition::kRain};
  const Dataset d = generate_dataset(spec, 6);
  const std::string first = boxes_text(d.annotations);
  std::istringstream in(first);
  const auto back = read_boxes_jsonl(in);
  EXPECT_EQ(boxes_text(back), first);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].gt, d.annotations[2].gt);
  EXPECT_EQ(back[2].pred, d.annotations[2].pred);
  EXPECT_EQ(back[2].condition, Condition::kRain);
}

TEST(Jsonl, RecordLayout) {
  FrameAnnotations f;
  f.frame_id = "a";
  Box3D g;
  g.cx = 1.5;
  f.gt = {g};
  Box3D p = g;
  p.score = 0.25;
  p.attribute = Attribute::kVehicleParked;
  f.pred = {p};
  const std::vector<FrameAnnotations> frames = {f};
  EXPECT_EQ(boxes_text(frames),
            "{\"frame\":\"a\",\"role\":\"gt\",\"class\":\"car\",\"cx\":1.5,\"cy\":0,\"cz\":0,\"w\":1,\"l\":1,\"h\":1,"
            "\"yaw\":0,\"vx\":0,\"vy\":0,\"attr\":null,\"condition\":\"day\"}\n"
            "{\"frame\":\"a\",\"role\":\"pred\",\"class\":\"car\",\"cx\":1.5,\"cy\":0,\"cz\":0,\"w\":1,\"l\":1,\"h\":1,"
            "\"yaw\":0,\"vx\":0,\"vy\":0,\"attr\":\"vehicle.parked\",\"score\":0.25,\"condition\":\"day\"}\n");
  PointCloud pc{"f", {RadarPoint{}}};
  pc.points[0].x = -2.5;
  pc.points[0].sweep_index = 3;
  const std::vector<PointCloud> clouds = {pc};
  EXPECT_EQ(points_text(clouds),
            "{\"frame\":\"f\",\"x\":-2.5,\"y\":0,\"z\":0,\"vx\":0,\"vy\":0,\"rcs\":0,\"sweep\":3,\"dt\":0}\n");
}

TEST(Jsonl, InterleavedFramesGroupInFirstAppearanceOrder) {
  std::istringstream in(
      "{\"frame\":\"b\",\"x\":1,\"y\":0,\"z\":0,\"vx\":0,\"vy\":0,\"rcs\":0,\"sweep\":0,\"dt\":0}\n"
      "\n"
      "{\"frame\":\"a\",\"x\":2,\"y\":0,\"z\":0,\"vx\":0,\"vy\":0,\"rcs\":0,\"sweep\":0,\"dt\":0}\n"
      "{\"frame\":\"b\",\"x\":3,\"y\":0,\"z\":0,\"vx\":0,\"vy\":0,\"rcs\":0,\"sweep\":1,\"dt\":0.075}\n");
  const auto clouds = read_points_jsonl(in);
  ASSERT_EQ(clouds.size(), 2u);
  EXPECT_EQ(clouds[0].frame_id, "b");
  ASSERT_EQ(clouds[0].points.size(), 2u);
  EXPECT_EQ(clouds[0].points[1].x, 3.0);
  EXPECT_EQ(clouds[1].frame_id, "a");
}

TEST(Jsonl, MalformedInputThrowsWithLineNumber) {
  const auto points_error = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_points_jsonl(in);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string ok = "{\"frame\":\"a\",\"x\":1,\"y\":0,\"z\":0,\"vx\":0,\"vy\":0,\"rcs\":0,\"sweep\":0,\"dt\":0}\n";
  EXPECT_NE(points_error(ok + "{not json\n").find("line 2"), std::string::npos);
  EXPECT_FALSE(points_error("[1,2]\n").empty());
  EXPECT_FALSE(points_error("{\"frame\":\"a\"}\n").empty());
  EXPECT_FALSE(points_error("{\"frame\":\"a\",\"x\":\"1\",\"y\":0,\"z\":0,\"vx\":0,\"vy\":0,\"rcs\":0,\"sweep\":0,\"dt\":0}\n")
                   .empty());
  EXPECT_FALSE(points_error("{\"frame\":\"a\",\"x\":1,\"y\":0,\"z\":0,\"vx\":0,\"vy\":0,\"rcs\":0,\"sweep\":-1,\"dt\":0}\n")
                   .empty());

  const auto boxes_throws = [](const std::string& text) {
    std::istringstream in(text);
    EXPECT_THROW(read_boxes_jsonl(in), FormatError) << text;
  };
  const std::string head = "{\"frame\":\"a\",";
  const std::string body = "\"cx\":0,\"cy\":0,\"cz\":0,\"w\":1,\"l\":1,\"h\":1,\"yaw\":0,\"vx\":0,\"vy\":0,";
  boxes_throws(head + "\"role\":\"maybe\",\"class\":\"car\"," + body + "\"attr\":null,\"condition\":\"day\"}\n");
  boxes_throws(head + "\"role\":\"gt\",\"class\":\"ufo\"," + body + "\"attr\":null,\"condition\":\"day\"}\n");
  boxes_throws(head + "\"role\":\"pred\",\"class\":\"car\"," + body + "\"attr\":null,\"condition\":\"day\"}\n");
  boxes_throws(head + "\"role\":\"gt\",\"class\":\"car\"," + body + "\"attr\":null,\"score\":1,\"condition\":\"day\"}\n");
  boxes_throws(head + "\"role\":\"gt\",\"class\":\"car\"," + body + "\"attr\":3,\"condition\":\"day\"}\n");
  boxes_throws(head + "\"role\":\"gt\",\"class\":\"car\"," + body + "\"attr\":null,\"condition\":\"fog\"}\n");
  boxes_throws(head + "\"role\":\"gt\",\"class\":\"car\"," + body + "\"attr\":null,\"condition\":\"day\"}\n" + head +
               "\"role\":\"gt\",\"class\":\"car\"," + body + "\"attr\":null,\"condition\":\"night\"}\n");
}

// ---------------------------------------------------------------- PANF / PGM

TEST(Panf, RoundTripMultipleMaps) {
  Rng rng(11);
  const Tensor a = pan::testing::random_tensor({3, 4, 2}, rng), b = pan::testing::random_tensor({1, 2, 5}, rng);
  std::ostringstream out;
  write_panf(out, a);
  write_panf(out, b);
  const std::string bytes = out.str();
  EXPECT_EQ(bytes.size(), 2 * 16 + 4 * (24 + 10));
  EXPECT_EQ(bytes.substr(0, 4), "PANF");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x03\x00\x00\x00", 4));
  std::istringstream in(bytes);
  const auto maps = read_panf(in);
  ASSERT_EQ(maps.size(), 2u);
  EXPECT_EQ(maps[0].shape(), a.shape());
  EXPECT_EQ(maps[1].shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(maps[0][i], static_cast<double>(static_cast<float>(a[i])));
}

TEST(Panf, FloatBitsAreLittleEndian) {
  std::ostringstream out;
  write_panf(out, Tensor({1, 1, 1}, std::vector<double>{1.0}));
  EXPECT_EQ(out.str().substr(16), std::string("\x00\x00\x80\x3f", 4));
}

TEST(Panf, CorruptInputThrows) {
  std::ostringstream out;
  write_panf(out, Tensor({2, 2, 1}));
  const std::string good = out.str();
  const auto throws = [](const std::string& s) {
    std::istringstream in(s);
    EXPECT_THROW(read_panf(in), FormatError);
  };
  throws("PANX" + good.substr(4));
  throws(good.substr(0, 10));
  throws(good.substr(0, good.size() - 1));
  throws(good + "PA");
  std::istringstream empty("");
  EXPECT_TRUE(read_panf(empty).empty());
  EXPECT_THROW(write_panf(out, Tensor({2, 2})), DimensionError);
}

TEST(Pgm, HeaderAndPixels) {
  Tensor map({2, 3, 2});
  map.at(0, 0, 0) = 1.0;
  map.at(0, 0, 1) = 1.0;  // sum 2, the maximum
  map.at(1, 2, 0) = -1.0;  // sum -1, the minimum
  map.at(0, 1, 0) = 0.5;   // sum 0.5
  std::ostringstream out;
  write_heatmap_pgm(out, map);
  const std::string s = out.str();
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(s.size(), header.size() + 6);
  EXPECT_EQ(s.substr(0, header.size()), header);
  const auto px = heatmap_pixels(map);
  EXPECT_EQ(px[0], 255);
  EXPECT_EQ(px[5], 0);
  EXPECT_EQ(px[1], 128);  // round(255 * 1.5 / 3)
  EXPECT_EQ(px[2], 85);   // round(255 * 1 / 3)
  EXPECT_EQ(static_cast<unsigned char>(s[header.size()]), 255);
}

TEST(Pgm, ConstantMapIsBlack) {
  for (auto v : heatmap_pixels(Tensor::filled({2, 2, 3}, 4.0))) EXPECT_EQ(v, 0);
}

TEST(Pgm, OccupancyImage) {
  OccupancyMap occ;
  occ.height = 1;
  occ.width = 3;
  occ.binary = {1, 0, 1};
  std::ostringstream out;
  write_occupancy_pgm(out, occ);
  EXPECT_EQ(out.str(), std::string("P5\n3 1\n255\n\xff\x00\xff", 14));
  EXPECT_THROW(write_pgm(out, 2, 2, std::vector<std::uint8_t>(3)), DimensionError);
}

// ---------------------------------------------------------------- config

TEST(Config, PipelineSections) {
  const json j = json::parse(R"({
    "pillars": {"x_min": -25.6, "x_max": 25.6, "y_min": -25.6, "y_max": 25.6, "pillar_size": 0.8, "out_channels": 16},
    "enhancer": {"embed_dim": 32, "num_heads": 4, "conv_enabled": false},
    "eval": {"match_thresholds_m": [1.0, 2.0], "range_filter": [0, 25]}
  })");
  const PipelineConfig c = pipeline_config_from_json(j);
  EXPECT_EQ(c.pan.pillars.width(), 64u);
  EXPECT_EQ(c.pan.pillars.out_channels, 16u);
  EXPECT_EQ(c.pan.enhancer.embed_dim, 32u);
  EXPECT_EQ(c.pan.enhancer.num_heads, 4u);
  EXPECT_FALSE(c.pan.enhancer.conv_enabled);
  EXPECT_EQ(c.eval.match_thresholds_m, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(c.eval.range_filter[1], 25.0);
  EXPECT_EQ(pipeline_config_from_json(json::object()).pan.pillars.width(), PillarConfig{}.width());
}

TEST(Config, StrictParsing) {
  EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"pilars": {}})")), ConfigError);
  EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"pillars": {"x_mn": 0}})")), ConfigError);
  EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"pillars": {"x_min": "0"}})")), ConfigError);
  EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"enhancer": {"num_heads": -2}})")), ConfigError);
  EXPECT_THROW(pipeline_config_from_json(json::parse(R"({"enhancer": {"conv_enabled": 1}})")), ConfigError);
  EXPECT_THROW(pipeline_config_from_json(json::parse("[]")), ConfigError);
  EXPECT_THROW(dataset_spec_from_json(json::parse(R"({"conditions": ["fog"]})")), ConfigError);
  EXPECT_THROW(dataset_spec_from_json(json::parse(R"({"scene": {"class_mix": {"ufo": 1}}})")), ConfigError);
  EXPECT_THROW(dataset_spec_from_json(json::parse(R"({"scene": {"class_mix": [1]}})")), ConfigError);
}

TEST(Config, DatasetSpec) {
  const json j = json::parse(R"({
    "frames": 7,
    "scene": {"n_objects": 3, "class_mix": {"car": 2, "pedestrian": 1}, "condition": "rain", "n_sweeps": 2},
    "perturb": {"translation_sigma": 0.2, "fp_rate": 1.5},
    "conditions": ["day", "night"]
  })");
  const DatasetSpec d = dataset_spec_from_json(j);
  EXPECT_EQ(d.frames, 7u);
  EXPECT_EQ(d.scene.n_objects, 3u);
  ASSERT_EQ(d.scene.class_mix.size(), 2u);
  EXPECT_EQ(d.scene.condition, Condition::kRain);
  EXPECT_EQ(d.scene.n_sweeps, 2u);
  ASSERT_TRUE(d.perturb);
  EXPECT_EQ(d.perturb->translation_sigma, 0.2);
  EXPECT_EQ(d.condition_cycle, (std::vector<Condition>{Condition::kDay, Condition::kNight}));
  EXPECT_FALSE(dataset_spec_from_json(json::object()).perturb);
}

TEST(Config, MissingFileNamesPath) {
  try {
    read_json_file("/nonexistent/cfg.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/cfg.json"), std::string::npos);
  }
}
