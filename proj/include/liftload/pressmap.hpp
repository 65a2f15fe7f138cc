#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "liftload/core.hpp"
#include "liftload/image.hpp"

namespace liftload::pressmap {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class Foot { Left, Right };

// Channel centroids and outline of one insole in a normalised foot frame:
// x in [0, 1] across the foot, y in [0, 1] from toe (0) to heel (1).
struct FootLayout {
  Foot foot = Foot::Left;
  std::vector<std::size_t> channels;  // global channel indices
  std::vector<Point> centroids;       // parallel to `channels`
  std::vector<Point> outline;         // closed polygon, last vertex joins the first
};

struct SensorLayout {
  FootLayout left;
  FootLayout right;

  // Throws InvalidSpec unless each foot has 18 distinct channels (left
  // 0-17, right 18-35) whose centroids lie strictly inside the outline.
  void validate() const;
};

bool inside_polygon(const Point& p, std::span<const Point> polygon);

// Built-in arrangement: toes, metatarsal heads, midfoot and heel regions;
// the right foot mirrors the left.
SensorLayout default_layout();

// Layout file: JSON {foot, channels: [{index, x, y}], outline: [[x, y], ...]}
// or an array of two such objects. A single foot is mirrored onto the other.
SensorLayout read_layout(const std::filesystem::path& path);
void write_layout(const std::filesystem::path& path, const SensorLayout& layout);

// Colour scale fitted as mean +/- 2 standard deviations of the training
// differential values; positions are clipped to [0, 1].
struct ColorScale {
  double mean = 0.0;
  double stddev = 1.0;
  double v_min = -2.0;
  double v_max = 2.0;

  static ColorScale from_range(double v_min, double v_max);

  double position(double v) const;
  std::array<std::uint8_t, 3> color(double v) const;
};

// Deep blue (0) -> blue -> cyan -> yellow -> red -> deep red (1).
std::array<double, 3> gradient_rgb(double position);

// Population mean/stddev over every channel value of every sample.
// Throws EmptyInput (< 2 samples) or DegenerateScale (stddev 0).
ColorScale fit_color_scale(std::span<const FeatureVector> samples);

// Scalar field over both feet side by side: width 2 * grid, height grid.
// Cells outside the outlines hold NaN.
struct Field {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  static bool is_background(double v) { return v != v; }
};

// Inverse-distance weighting (power 2) from one foot's centroids; exact
// channel value at a centroid.
double idw_value(const FootLayout& foot, std::span<const double> features, const Point& p);

// Foot-frame centre of grid cell (column within the foot patch, row).
Point cell_center(std::size_t column, std::size_t row, std::size_t grid_size);

Field interpolate_map(const FeatureVector& features, const SensorLayout& layout,
                      std::size_t grid_size = 128);

struct RenderOptions {
  double smoothing_sigma_px = 3.0;
  std::size_t out_size = 224;
  double crop_margin = 0.05;
  std::array<std::uint8_t, 3> background{0, 0, 0};
};

RgbImage render(const Field& field, const ColorScale& scale, const RenderOptions& opts = {});

inline RgbImage render_sample(const FeatureVector& features, const SensorLayout& layout,
                              const ColorScale& scale, const RenderOptions& opts = {},
                              std::size_t grid_size = 128) {
  return render(interpolate_map(features, layout, grid_size), scale, opts);
}

}  // namespace liftload::pressmap
