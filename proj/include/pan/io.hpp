#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pan/fusion.hpp"
#include "pan/metrics.hpp"
#include "pan/pillars.hpp"
#include "pan/tensor.hpp"

namespace pan {

// Shortest decimal that parses back to the same double. -0 is written as 0
// so that a read-write cycle is a fixed point. Non-finite values throw.
std::string format_double(double v);

// points.jsonl: one object per point, frames in order, points in order.
void write_points_jsonl(std::ostream& out, std::span<const PointCloud> clouds);
// Points are grouped by frame in order of first appearance.
std::vector<PointCloud> read_points_jsonl(std::istream& in);

// boxes.jsonl: per frame, GT boxes then predictions.
void write_boxes_jsonl(std::ostream& out, std::span<const FrameAnnotations> frames);
std::vector<FrameAnnotations> read_boxes_jsonl(std::istream& in);

// "PANF", u32 H, W, C, then float32 values; all little-endian, row-major.
// A stream may hold several maps back to back.
void write_panf(std::ostream& out, const Tensor& map);
std::vector<Tensor> read_panf(std::istream& in);

// Binary PGM (P5), 8-bit.
void write_pgm(std::ostream& out, std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels);
// Per-cell channel sums of an [H, W, C] map, scaled so the smallest sum is
// black and the largest white. A constant map is all black.
std::vector<std::uint8_t> heatmap_pixels(const Tensor& map);
void write_heatmap_pgm(std::ostream& out, const Tensor& map);
// Occupied cells white.
void write_occupancy_pgm(std::ostream& out, const OccupancyMap& occ);

}  // namespace pan
