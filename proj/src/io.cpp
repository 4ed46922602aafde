#include "pan/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "pan/errors.hpp"

namespace pan {

namespace {

using nlohmann::json;

std::string quoted(const std::string& s) { return json(s).dump(); }

template <typename Fn>
void for_each_line(std::istream& in, const char* what, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw FormatError("expected a JSON object");
      fn(j);
    } catch (const json::exception& e) {
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

double number(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw FormatError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::string string_field(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
      static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  return true;
}

}  // namespace

std::string format_double(double v) {
  if (!std::isfinite(v)) throw FormatError("cannot serialize a non-finite number");
  if (v == 0.0) v = 0.0;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_points_jsonl(std::ostream& out, std::span<const PointCloud> clouds) {
  for (const PointCloud& pc : clouds) {
    const std::string frame = quoted(pc.frame_id);
    for (const RadarPoint& p : pc.points) {
      out << "{\"frame\":" << frame << ",\"x\":" << format_double(p.x) << ",\"y\":" << format_double(p.y)
          << ",\"z\":" << format_double(p.z) << ",\"vx\":" << format_double(p.vx) << ",\"vy\":" << format_double(p.vy)
          << ",\"rcs\":" << format_double(p.rcs) << ",\"sweep\":" << p.sweep_index
          << ",\"dt\":" << format_double(p.sweep_offset) << "}\n";
    }
  }
}

std::vector<PointCloud> read_points_jsonl(std::istream& in) {
  std::vector<PointCloud> clouds;
  std::map<std::string, std::size_t> index;
  for_each_line(in, "points.jsonl", [&](const json& j) {
    const std::string frame = string_field(j, "frame");
    RadarPoint p;
    p.x = number(j, "x");
    p.y = number(j, "y");
    p.z = number(j, "z");
    p.vx = number(j, "vx");
    p.vy = number(j, "vy");
    p.rcs = number(j, "rcs");
    const json& sweep = j.at("sweep");
    if (!sweep.is_number_unsigned() || sweep.get<std::uint64_t>() > UINT32_MAX) {
      throw FormatError("field 'sweep' must be a non-negative integer");
    }
    p.sweep_index = sweep.get<std::uint32_t>();
    p.sweep_offset = number(j, "dt");
    auto [it, inserted] = index.try_emplace(frame, clouds.size());
    if (inserted) clouds.push_back(PointCloud{frame, {}});
    clouds[it->second].points.push_back(p);
  });
  return clouds;
}

namespace {

void write_box(std::ostream& out, const std::string& frame, const char* role, const Box3D& b, bool with_score,
               Condition cond) {
  out << "{\"frame\":" << frame << ",\"role\":\"" << role << "\",\"class\":\"" << to_string(b.cls) << '"'
      << ",\"cx\":" << format_double(b.cx) << ",\"cy\":" << format_double(b.cy) << ",\"cz\":" << format_double(b.cz)
      << ",\"w\":" << format_double(b.w) << ",\"l\":" << format_double(b.l) << ",\"h\":" << format_double(b.h)
      << ",\"yaw\":" << format_double(b.yaw) << ",\"vx\":" << format_double(b.vx)
      << ",\"vy\":" << format_double(b.vy) << ",\"attr\":";
  if (b.attribute) {
    out << '"' << to_string(*b.attribute) << '"';
  } else {
    out << "null";
  }
  if (with_score) out << ",\"score\":" << format_double(b.score);
  out << ",\"condition\":\"" << to_string(cond) << "\"}\n";
}

}  // namespace

void write_boxes_jsonl(std::ostream& out, std::span<const FrameAnnotations> frames) {
  for (const FrameAnnotations& f : frames) {
    const std::string frame = quoted(f.frame_id);
    for (const Box3D& b : f.gt) write_box(out, frame, "gt", b, false, f.condition);
    for (const Box3D& b : f.pred) write_box(out, frame, "pred", b, true, f.condition);
  }
}

std::vector<FrameAnnotations> read_boxes_jsonl(std::istream& in) {
  std::vector<FrameAnnotations> frames;
  std::map<std::string, std::size_t> index;
  for_each_line(in, "boxes.jsonl", [&](const json& j) {
    const std::string frame = string_field(j, "frame");
    const std::string role = string_field(j, "role");
    if (role != "gt" && role != "pred") throw FormatError("role must be \"gt\" or \"pred\", got \"" + role + "\"");
    const bool pred = role == "pred";
    Box3D b;
    const std::string cls = string_field(j, "class");
    const auto parsed = parse_class(cls);
    if (!parsed) throw FormatError("unknown class \"" + cls + "\"");
    b.cls = *parsed;
    b.cx = number(j, "cx");
    b.cy = number(j, "cy");
    b.cz = number(j, "cz");
    b.w = number(j, "w");
    b.l = number(j, "l");
    b.h = number(j, "h");
    b.yaw = number(j, "yaw");
    b.vx = number(j, "vx");
    b.vy = number(j, "vy");
    const json& attr = j.at("attr");
    if (attr.is_string()) {
      b.attribute = parse_attribute(attr.get<std::string>());
    } else if (!attr.is_null()) {
      throw FormatError("field 'attr' must be a string or null");
    }
    if (pred) {
      b.score = number(j, "score");
    } else if (j.contains("score")) {
      throw FormatError("ground-truth boxes carry no score");
    }
    const std::string cond_name = string_field(j, "condition");
    const auto cond = parse_condition(cond_name);
    if (!cond) throw FormatError("unknown condition \"" + cond_name + "\"");

    auto [it, inserted] = index.try_emplace(frame, frames.size());
    if (inserted) {
      FrameAnnotations f;
      f.frame_id = frame;
      f.condition = *cond;
      frames.push_back(std::move(f));
    }
    FrameAnnotations& f = frames[it->second];
    if (f.condition != *cond) throw FormatError("frame \"" + frame + "\" has conflicting conditions");
    (pred ? f.pred : f.gt).push_back(b);
  });
  return frames;
}

void write_panf(std::ostream& out, const Tensor& map) {
  if (map.rank() != 3) throw DimensionError("write_panf: map must be [H, W, C], got " + shape_string(map.shape()));
  for (std::size_t d = 0; d < 3; ++d) {
    if (map.dim(d) > UINT32_MAX) throw DimensionError("write_panf: dimension exceeds u32");
  }
  out.write("PANF", 4);
  for (std::size_t d = 0; d < 3; ++d) put_u32(out, static_cast<std::uint32_t>(map.dim(d)));
  for (double v : map.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    put_u32(out, bits);
  }
}

std::vector<Tensor> read_panf(std::istream& in) {
  std::vector<Tensor> maps;
  char magic[4];
  while (in.read(magic, 4)) {
    if (std::memcmp(magic, "PANF", 4) != 0) throw FormatError("read_panf: bad magic");
    std::uint32_t dims[3];
    for (auto& d : dims)
      if (!get_u32(in, d)) throw FormatError("read_panf: truncated header");
    Tensor t({dims[0], dims[1], dims[2]});
    for (double& v : t.data()) {
      std::uint32_t bits;
      if (!get_u32(in, bits)) throw FormatError("read_panf: truncated data");
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    maps.push_back(std::move(t));
  }
  if (in.gcount() != 0) throw FormatError("read_panf: trailing bytes");
  return maps;
}

void write_pgm(std::ostream& out, std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels) {
  if (width == 0 || height == 0) throw DimensionError("write_pgm: empty image");
  if (pixels.size() != width * height) throw DimensionError("write_pgm: pixel count does not match size");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

std::vector<std::uint8_t> heatmap_pixels(const Tensor& map) {
  if (map.rank() != 3) throw DimensionError("heatmap_pixels: map must be [H, W, C]");
  const std::size_t cells = map.dim(0) * map.dim(1), c = map.dim(2);
  std::vector<double> sums(cells, 0.0);
  const auto values = map.data();
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t k = 0; k < c; ++k) sums[i] += values[i * c + k];
  std::vector<std::uint8_t> px(cells, 0);
  if (cells == 0) return px;
  const auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return px;
  for (std::size_t i = 0; i < cells; ++i) {
    px[i] = static_cast<std::uint8_t>(std::lround(255.0 * (sums[i] - *lo) / span));
  }
  return px;
}

void write_heatmap_pgm(std::ostream& out, const Tensor& map) {
  require_finite(map, "write_heatmap_pgm");
  const auto px = heatmap_pixels(map);
  write_pgm(out, map.dim(1), map.dim(0), px);
}

void write_occupancy_pgm(std::ostream& out, const OccupancyMap& occ) {
  std::vector<std::uint8_t> px(occ.binary.size());
  std::transform(occ.binary.begin(), occ.binary.end(), px.begin(), [](std::uint8_t b) { return b ? 255 : 0; });
  write_pgm(out, occ.width, occ.height, px);
}

}  // namespace pan
