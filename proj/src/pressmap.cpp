#include "liftload/pressmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

namespace liftload::pressmap {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FootLayout mirrored(const FootLayout& src) {
  FootLayout out;
  out.foot = src.foot == Foot::Left ? Foot::Right : Foot::Left;
  for (std::size_t ch : src.channels) {
    out.channels.push_back(src.foot == Foot::Left ? ch + kChannelsPerFoot : ch - kChannelsPerFoot);
  }
  for (const auto& p : src.centroids) out.centroids.push_back({1.0 - p.x, p.y});
  for (auto it = src.outline.rbegin(); it != src.outline.rend(); ++it) {
    out.outline.push_back({1.0 - it->x, it->y});
  }
  return out;
}

void validate_foot(const FootLayout& f) {
  const std::size_t first = f.foot == Foot::Left ? 0 : kChannelsPerFoot;
  if (f.channels.size() != kChannelsPerFoot || f.centroids.size() != kChannelsPerFoot) {
    throw Error(ErrorCode::InvalidSpec, "each foot needs exactly 18 channel centroids");
  }
  if (f.outline.size() < 3) throw Error(ErrorCode::InvalidSpec, "foot outline needs 3+ vertices");
  std::set<std::size_t> seen;
  for (std::size_t k = 0; k < f.channels.size(); ++k) {
    const auto ch = f.channels[k];
    if (ch < first || ch >= first + kChannelsPerFoot || !seen.insert(ch).second) {
      throw Error(ErrorCode::InvalidSpec, "channel index " + std::to_string(ch) +
                                              " is duplicated or belongs to the other foot");
    }
    const auto& p = f.centroids[k];
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0) ||
        !inside_polygon(p, f.outline)) {
      throw Error(ErrorCode::InvalidSpec,
                  "centroid of channel " + std::to_string(ch) + " is outside the outline");
    }
  }
}

json foot_to_json(const FootLayout& f) {
  json j;
  j["foot"] = f.foot == Foot::Left ? "left" : "right";
  json channels = json::array();
  for (std::size_t k = 0; k < f.channels.size(); ++k) {
    channels.push_back({{"index", f.channels[k]}, {"x", f.centroids[k].x}, {"y", f.centroids[k].y}});
  }
  j["channels"] = channels;
  json outline = json::array();
  for (const auto& p : f.outline) outline.push_back({p.x, p.y});
  j["outline"] = outline;
  return j;
}

FootLayout foot_from_json(const json& j) {
  FootLayout f;
  const auto foot = j.at("foot").get<std::string>();
  if (foot == "left") f.foot = Foot::Left;
  else if (foot == "right") f.foot = Foot::Right;
  else throw Error(ErrorCode::InvalidSpec, "foot must be 'left' or 'right'");
  for (const auto& c : j.at("channels")) {
    f.channels.push_back(c.at("index").get<std::size_t>());
    f.centroids.push_back({c.at("x").get<double>(), c.at("y").get<double>()});
  }
  for (const auto& p : j.at("outline")) {
    const auto xy = p.get<std::vector<double>>();
    if (xy.size() != 2) throw Error(ErrorCode::InvalidSpec, "outline vertices are [x, y] pairs");
    f.outline.push_back({xy[0], xy[1]});
  }
  return f;
}

// Separable Gaussian blur along rows (horizontal) or columns.
std::vector<double> blur_1d(const std::vector<double>& src, std::size_t width, std::size_t height,
                            std::span<const double> kernel, bool horizontal) {
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  std::vector<double> out(src.size(), 0.0);
  const auto w = static_cast<std::ptrdiff_t>(width);
  const auto h = static_cast<std::ptrdiff_t>(height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const std::ptrdiff_t sx = horizontal ? x + k : x;
        const std::ptrdiff_t sy = horizontal ? y : y + k;
        if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
        acc += kernel[static_cast<std::size_t>(k + radius)] * src[static_cast<std::size_t>(sy * w + sx)];
      }
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

}  // namespace

bool inside_polygon(const Point& p, std::span<const Point> polygon) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = polygon[i];
    const auto& b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

void SensorLayout::validate() const {
  if (left.foot != Foot::Left || right.foot != Foot::Right) {
    throw Error(ErrorCode::InvalidSpec, "layout needs one left and one right foot");
  }
  validate_foot(left);
  validate_foot(right);
}

SensorLayout default_layout() {
  FootLayout left;
  left.foot = Foot::Left;
  left.outline = {{0.50, 0.03}, {0.66, 0.05}, {0.78, 0.12}, {0.84, 0.22}, {0.85, 0.32},
                  {0.80, 0.42}, {0.74, 0.52}, {0.72, 0.62}, {0.73, 0.72}, {0.74, 0.82},
                  {0.70, 0.91}, {0.60, 0.97}, {0.46, 0.98}, {0.36, 0.93}, {0.31, 0.84},
                  {0.30, 0.72}, {0.28, 0.60}, {0.24, 0.48}, {0.18, 0.36}, {0.16, 0.24},
                  {0.20, 0.13}, {0.30, 0.06}, {0.40, 0.03}};
  left.centroids = {
      // toes
      {0.32, 0.14}, {0.45, 0.10}, {0.58, 0.10}, {0.70, 0.16},
      // metatarsal heads
      {0.26, 0.30}, {0.38, 0.27}, {0.50, 0.26}, {0.62, 0.27}, {0.74, 0.30},
      // midfoot
      {0.38, 0.47}, {0.54, 0.46}, {0.68, 0.47}, {0.50, 0.60}, {0.62, 0.64},
      // heel
      {0.42, 0.78}, {0.60, 0.78}, {0.44, 0.90}, {0.60, 0.90}};
  for (std::size_t k = 0; k < kChannelsPerFoot; ++k) left.channels.push_back(k);
  SensorLayout layout{left, mirrored(left)};
  return layout;
}

SensorLayout read_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open layout " + path.string());
  SensorLayout layout;
  try {
    json j;
    in >> j;
    std::vector<FootLayout> feet;
    if (j.is_array()) {
      for (const auto& f : j) feet.push_back(foot_from_json(f));
    } else {
      feet.push_back(foot_from_json(j));
    }
    if (feet.size() == 1) feet.push_back(mirrored(feet[0]));
    if (feet.size() != 2 || feet[0].foot == feet[1].foot) {
      throw Error(ErrorCode::InvalidSpec, "layout must describe a left and a right foot");
    }
    for (auto& f : feet) (f.foot == Foot::Left ? layout.left : layout.right) = std::move(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, path.string() + ": " + e.what());
  }
  layout.validate();
  return layout;
}

void write_layout(const std::filesystem::path& path, const SensorLayout& layout) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << json::array({foot_to_json(layout.left), foot_to_json(layout.right)}).dump(2) << '\n';
}

ColorScale ColorScale::from_range(double v_min, double v_max) {
  if (!(v_min < v_max)) throw Error(ErrorCode::DegenerateScale, "colour range is empty");
  ColorScale s;
  s.mean = 0.5 * (v_min + v_max);
  s.stddev = 0.25 * (v_max - v_min);
  s.v_min = v_min;
  s.v_max = v_max;
  return s;
}

double ColorScale::position(double v) const {
  const double t = (v - v_min) / (v_max - v_min);
  return std::clamp(t, 0.0, 1.0);
}

std::array<double, 3> gradient_rgb(double t) {
  static constexpr std::array<std::array<double, 4>, 6> kStops{{
      {0.0, 0.0, 0.0, 0.5},
      {0.125, 0.0, 0.0, 1.0},
      {0.375, 0.0, 1.0, 1.0},
      {0.625, 1.0, 1.0, 0.0},
      {0.875, 1.0, 0.0, 0.0},
      {1.0, 0.5, 0.0, 0.0},
  }};
  t = std::clamp(t, 0.0, 1.0);
  for (std::size_t k = 1; k < kStops.size(); ++k) {
    if (t <= kStops[k][0]) {
      const auto& a = kStops[k - 1];
      const auto& b = kStops[k];
      const double u = (t - a[0]) / (b[0] - a[0]);
      return {a[1] + u * (b[1] - a[1]), a[2] + u * (b[2] - a[2]), a[3] + u * (b[3] - a[3])};
    }
  }
  return {kStops.back()[1], kStops.back()[2], kStops.back()[3]};
}

std::array<std::uint8_t, 3> ColorScale::color(double v) const {
  const auto rgb = gradient_rgb(position(v));
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(std::lround(rgb[c] * 255.0));
  return out;
}

ColorScale fit_color_scale(std::span<const FeatureVector> samples) {
  if (samples.size() < 2) throw Error(ErrorCode::EmptyInput, "colour scale needs 2+ samples");
  // Welford's streaming update.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    for (double v : s) {
      ++n;
      const double delta = v - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (v - mean);
    }
  }
  const double stddev = std::sqrt(m2 / static_cast<double>(n));
  if (!(stddev > 0.0) || stddev <= 1e-12 * std::max(1.0, std::abs(mean))) {
    throw Error(ErrorCode::DegenerateScale, "training differential values have zero spread");
  }
  ColorScale s;
  s.mean = mean;
  s.stddev = stddev;
  s.v_min = mean - 2.0 * stddev;
  s.v_max = mean + 2.0 * stddev;
  return s;
}

double idw_value(const FootLayout& foot, std::span<const double> features, const Point& p) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < foot.channels.size(); ++k) {
    const double dx = p.x - foot.centroids[k].x;
    const double dy = p.y - foot.centroids[k].y;
    const double d2 = dx * dx + dy * dy;
    const double v = features[foot.channels[k]];
    if (d2 < 1e-24) return v;
    num += v / d2;
    den += 1.0 / d2;
  }
  return num / den;
}

Point cell_center(std::size_t column, std::size_t row, std::size_t grid_size) {
  const double g = static_cast<double>(grid_size);
  return {(static_cast<double>(column) + 0.5) / g, (static_cast<double>(row) + 0.5) / g};
}

Field interpolate_map(const FeatureVector& features, const SensorLayout& layout,
                      std::size_t grid_size) {
  Field f;
  f.width = 2 * grid_size;
  f.height = grid_size;
  f.values.assign(f.width * f.height, kNaN);
  const std::array<const FootLayout*, 2> feet{&layout.left, &layout.right};
  for (std::size_t side = 0; side < 2; ++side) {
    const auto& foot = *feet[side];
    for (std::size_t row = 0; row < grid_size; ++row) {
      for (std::size_t col = 0; col < grid_size; ++col) {
        const Point p = cell_center(col, row, grid_size);
        if (!inside_polygon(p, foot.outline)) continue;
        f.values[row * f.width + side * grid_size + col] = idw_value(foot, features, p);
      }
    }
  }
  return f;
}

RgbImage render(const Field& field, const ColorScale& scale, const RenderOptions& opts) {
  const std::size_t w = field.width, h = field.height;
  std::vector<double> weighted(w * h, 0.0), mask(w * h, 0.0);
  std::size_t x_lo = w, x_hi = 0, y_lo = h, y_hi = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = field.at(x, y);
      if (Field::is_background(v)) continue;
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "field value is not finite");
      weighted[y * w + x] = v;
      mask[y * w + x] = 1.0;
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x + 1);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y + 1);
    }
  }
  RgbImage image(opts.out_size, opts.out_size);
  for (std::size_t i = 0; i < opts.out_size * opts.out_size; ++i) {
    std::copy(opts.background.begin(), opts.background.end(), image.pixels.begin() + i * 3);
  }
  if (x_hi == 0) return image;

  // Normalised convolution keeps the blur inside the outline.
  if (opts.smoothing_sigma_px > 0.0) {
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * opts.smoothing_sigma_px));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (std::size_t k = 0; k < kernel.size(); ++k) {
      const double d = static_cast<double>(k) - static_cast<double>(radius);
      kernel[k] = std::exp(-0.5 * d * d / (opts.smoothing_sigma_px * opts.smoothing_sigma_px));
      sum += kernel[k];
    }
    for (auto& k : kernel) k /= sum;
    auto num = blur_1d(blur_1d(weighted, w, h, kernel, true), w, h, kernel, false);
    auto den = blur_1d(blur_1d(mask, w, h, kernel, true), w, h, kernel, false);
    for (std::size_t i = 0; i < w * h; ++i) {
      weighted[i] = mask[i] > 0.0 && den[i] > 0.0 ? num[i] / den[i] : 0.0;
    }
  }

  // Crop box around the outlines, widened by the margin on every side.
  const double bw = static_cast<double>(x_hi - x_lo);
  const double bh = static_cast<double>(y_hi - y_lo);
  const double x0 = static_cast<double>(x_lo) - opts.crop_margin * bw;
  const double y0 = static_cast<double>(y_lo) - opts.crop_margin * bh;
  const double sx = bw * (1.0 + 2.0 * opts.crop_margin) / static_cast<double>(opts.out_size);
  const double sy = bh * (1.0 + 2.0 * opts.crop_margin) / static_cast<double>(opts.out_size);

  auto sample = [&](std::ptrdiff_t x, std::ptrdiff_t y, double& value, double& cover) {
    if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(w) ||
        y >= static_cast<std::ptrdiff_t>(h)) {
      value = 0.0;
      cover = 0.0;
      return;
    }
    const auto i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
    value = weighted[i];
    cover = mask[i];
  };

  for (std::size_t v = 0; v < opts.out_size; ++v) {
    const double fy = y0 + (static_cast<double>(v) + 0.5) * sy - 0.5;
    const auto iy = static_cast<std::ptrdiff_t>(std::floor(fy));
    const double ty = fy - static_cast<double>(iy);
    for (std::size_t u = 0; u < opts.out_size; ++u) {
      const double fx = x0 + (static_cast<double>(u) + 0.5) * sx - 0.5;
      const auto ix = static_cast<std::ptrdiff_t>(std::floor(fx));
      const double tx = fx - static_cast<double>(ix);
      double acc = 0.0, cover = 0.0;
      const double weights[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
      const std::ptrdiff_t offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
      for (int k = 0; k < 4; ++k) {
        double val = 0.0, m = 0.0;
        sample(ix + offsets[k][0], iy + offsets[k][1], val, m);
        acc += weights[k] * m * val;
        cover += weights[k] * m;
      }
      if (cover < 0.5) continue;
      const auto rgb = scale.color(acc / cover);
      std::copy(rgb.begin(), rgb.end(), image.at(u, v));
    }
  }
  return image;
}

}  // namespace liftload::pressmap
