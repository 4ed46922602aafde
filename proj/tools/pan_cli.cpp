#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pan/backbone.hpp"
#include "pan/bench.hpp"
#include "pan/config.hpp"
#include "pan/errors.hpp"
#include "pan/io.hpp"
#include "pan/metrics.hpp"
#include "pan/safety.hpp"
#include "pan/synth.hpp"

namespace {

using namespace pan;

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (text.empty() || text[0] == '-') throw std::invalid_argument(text);
    v = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(what + ": expected an unsigned integer, got '" + text + "'");
  return v;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("PAN_SEED")) return parse_u64(env, "PAN_SEED");
  throw ConfigError("no seed: pass --seed or set PAN_SEED");
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void close_checked(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw std::runtime_error("error writing " + path);
}

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : pipeline_config_from_json(read_json_file(path));
}

PanParams load_or_init_params(const std::string& spec, const PanConfig& cfg) {
  static constexpr std::string_view kRandom = "random:";
  if (spec.rfind(kRandom, 0) == 0) {
    Rng rng(parse_u64(spec.substr(kRandom.size()), "--params"));
    return init_pan_params(cfg, rng);
  }
  auto in = open_in(spec);
  return load_params(in, cfg);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results are stored
// by index, so output order does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::array<double, 2> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("--range: expected lo:hi, got '" + text + "'");
  try {
    std::size_t a = 0, b = 0;
    const std::string lo_s = text.substr(0, colon), hi_s = text.substr(colon + 1);
    const double lo = std::stod(lo_s, &a), hi = std::stod(hi_s, &b);
    if (a != lo_s.size() || b != hi_s.size()) throw std::invalid_argument(text);
    if (!(lo >= 0.0 && hi > lo)) throw ConfigError("--range: need 0 <= lo < hi, got '" + text + "'");
    return {lo, hi};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("--range: expected lo:hi, got '" + text + "'");
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int run_gen(const std::string& spec_path, std::optional<std::uint64_t> seed, const std::string& points_path,
            const std::string& boxes_path) {
  const DatasetSpec spec = dataset_spec_from_json(read_json_file(spec_path));
  const Dataset d = generate_dataset(spec, resolve_seed(seed));
  auto pts = open_out(points_path);
  write_points_jsonl(pts, d.clouds);
  close_checked(pts, points_path);
  auto boxes = open_out(boxes_path);
  write_boxes_jsonl(boxes, d.annotations);
  close_checked(boxes, boxes_path);

  std::size_t n_points = 0, n_gt = 0, n_pred = 0;
  for (const auto& c : d.clouds) n_points += c.points.size();
  for (const auto& a : d.annotations) {
    n_gt += a.gt.size();
    n_pred += a.pred.size();
  }
  std::cout << "frames " << d.clouds.size() << " points " << n_points << " gt " << n_gt << " pred " << n_pred
            << '\n';
  return 0;
}

int run_backbone(const std::string& points_path, const std::string& config_path, const std::string& params_spec,
                 const std::string& out_path, const std::string& viz_path, bool no_conv, std::size_t threads) {
  PipelineConfig cfg = load_config(config_path);
  if (no_conv) cfg.pan.enhancer.conv_enabled = false;
  const PanParams params = load_or_init_params(params_spec, cfg.pan);
  auto in = open_in(points_path);
  const std::vector<PointCloud> clouds = read_points_jsonl(in);

  std::vector<Tensor> maps(clouds.size());
  parallel_for(clouds.size(), threads, [&](std::size_t i) { maps[i] = pan_backbone(clouds[i], params, cfg.pan); });

  auto out = open_out(out_path, std::ios::binary);
  for (const Tensor& m : maps) write_panf(out, m);
  close_checked(out, out_path);
  if (!viz_path.empty()) {
    if (maps.empty()) throw std::runtime_error("--viz: no frames in " + points_path);
    auto viz = open_out(viz_path, std::ios::binary);
    write_heatmap_pgm(viz, maps.front());
    close_checked(viz, viz_path);
  }
  const Shape shape = cfg.pan.output_shape();
  std::cout << "frames " << maps.size() << " shape " << shape_string(shape) << '\n';
  return 0;
}

int run_eval(const std::string& boxes_path, const std::string& config_path, const std::string& range_text,
             const std::string& condition_text, const std::string& report_path) {
  const PipelineConfig cfg = load_config(config_path);
  auto in = open_in(boxes_path);
  const std::vector<FrameAnnotations> frames = read_boxes_jsonl(in);
  Split split;
  split.range = parse_range(range_text);
  if (condition_text != "all") {
    const auto c = parse_condition(condition_text);
    if (!c) throw ConfigError("--condition: expected day|rain|night|all, got '" + condition_text + "'");
    split.condition = c;
  }
  split.name = condition_text + " " + range_text;
  const MetricsReport report = evaluate(frames, cfg.eval, split);
  auto out = open_out(report_path);
  out << to_json(report).dump(2) << '\n';
  close_checked(out, report_path);
  std::cout << format_table(std::span<const MetricsReport>(&report, 1));
  return 0;
}

int run_bench(const std::string& points_path, const std::string& config_path, const std::string& params_spec,
              std::optional<std::uint64_t> seed, std::size_t repeats) {
  const PipelineConfig cfg = load_config(config_path);
  const std::string spec = params_spec.empty() ? "random:" + std::to_string(resolve_seed(seed)) : params_spec;
  const PanParams params = load_or_init_params(spec, cfg.pan);
  auto in = open_in(points_path);
  const std::vector<PointCloud> clouds = read_points_jsonl(in);
  std::cout << "frame median_ms P attention_macs dense_equivalent_macs ratio\n";
  for (const PointCloud& pc : clouds) {
    const BackboneBench b = bench_backbone(pc, params, cfg.pan, repeats);
    std::cout << pc.frame_id << ' ' << fixed(b.timing.median_ms, 3) << ' ' << b.work.pillar_count << ' '
              << b.work.attention_macs << ' ' << b.work.dense_equivalent_macs << ' ' << fixed(b.work.ratio(), 6)
              << '\n';
  }
  return 0;
}

int run_safety(double speed_kmh, double mu, double t_r) {
  SafetyInput in;
  in.v0 = kmh_to_ms(speed_kmh);
  in.mu = mu;
  in.t_r = t_r;
  std::cout << "d_b " << fixed(braking_distance(in), 2) << " m\n"
            << "d_r " << fixed(reaction_distance(in), 2) << " m\n"
            << "d_t " << fixed(total_stopping_distance(in), 2) << " m\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pillar attention radar backbone toolkit"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads for per-frame work")->check(CLI::PositiveNumber);

  std::optional<std::uint64_t> seed;
  const auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed (falls back to PAN_SEED)");
  };

  std::string spec_path, points_path, boxes_path, config_path, params_spec, out_path, viz_path, report_path;
  std::string range_text = "0:50", condition_text = "all";
  bool no_conv = false;
  std::size_t repeats = 5;
  double map = 0, ate = 0, ase = 0, aoe = 0, ave = 0, aae = 0;
  double speed_kmh = 0, mu = 0.7, t_r = 1.0;

  auto* gen = app.add_subcommand("gen", "Generate synthetic scenes");
  gen->add_option("--spec", spec_path, "Generation spec JSON")->required();
  add_seed(gen);
  gen->add_option("--out-points", points_path, "points.jsonl output")->required();
  gen->add_option("--out-boxes", boxes_path, "boxes.jsonl output")->required();

  auto* backbone = app.add_subcommand("backbone", "Run the backbone on every frame");
  backbone->add_option("--points", points_path)->required();
  backbone->add_option("--config", config_path, "Pipeline config JSON");
  backbone->add_option("--params", params_spec, "Parameter file or random:<seed>")->required();
  backbone->add_option("--out", out_path, "PANF output")->required();
  backbone->add_option("--viz", viz_path, "PGM heatmap of the first frame");
  backbone->add_flag("--no-conv", no_conv, "Skip the convolutional refinement");

  auto* eval = app.add_subcommand("eval", "Evaluate detections");
  eval->add_option("--boxes", boxes_path)->required();
  eval->add_option("--config", config_path, "Pipeline config JSON");
  eval->add_option("--range", range_text, "Range band lo:hi in meters");
  eval->add_option("--condition", condition_text, "day|rain|night|all");
  eval->add_option("--report", report_path, "MetricsReport JSON output")->required();

  auto* nds_cmd = app.add_subcommand("nds", "Detection score from mAP and TP errors");
  nds_cmd->add_option("--map", map)->required();
  nds_cmd->add_option("--ate", ate)->required();
  nds_cmd->add_option("--ase", ase)->required();
  nds_cmd->add_option("--aoe", aoe)->required();
  nds_cmd->add_option("--ave", ave)->required();
  nds_cmd->add_option("--aae", aae)->required();

  auto* bench = app.add_subcommand("bench", "Time the backbone per frame");
  bench->add_option("--points", points_path)->required();
  bench->add_option("--config", config_path, "Pipeline config JSON");
  bench->add_option("--params", params_spec, "Parameter file or random:<seed>; default random:<seed>");
  add_seed(bench);
  bench->add_option("--repeats", repeats)->check(CLI::PositiveNumber);

  auto* safety = app.add_subcommand("safety", "Stopping distances");
  safety->add_option("--speed-kmh", speed_kmh)->required();
  safety->add_option("--mu", mu);
  safety->add_option("--tr", t_r);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "pan: error: " << e.what() << '\n';
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (gen->parsed()) return run_gen(spec_path, seed, points_path, boxes_path);
    if (backbone->parsed()) {
      return run_backbone(points_path, config_path, params_spec, out_path, viz_path, no_conv, threads);
    }
    if (eval->parsed()) return run_eval(boxes_path, config_path, range_text, condition_text, report_path);
    if (nds_cmd->parsed()) {
      std::cout << fixed(nds(map, {ate, ase, aoe, ave, aae}), 4) << '\n';
      return 0;
    }
    if (bench->parsed()) return run_bench(points_path, config_path, params_spec, seed, repeats);
    if (safety->parsed()) return run_safety(speed_kmh, mu, t_r);
  } catch (const std::exception& e) {
    std::cerr << "pan: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
