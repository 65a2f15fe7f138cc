#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "liftload/pressmap.hpp"

using namespace liftload;
using namespace liftload::pressmap;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(LIFTLOAD_TEST_DATA) / "golden_map.png";

// Fixed vector built from closed-form values only, so it does not depend on
// the standard library's distributions.
FeatureVector golden_features() {
  FeatureVector f{};
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    f[c] = 600.0 * std::sin(0.7 * static_cast<double>(c)) + 40.0 * static_cast<double>(c % 7);
  }
  return f;
}

double oracle_idw(const FootLayout& foot, const FeatureVector& f, const Point& p) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < foot.centroids.size(); ++k) {
    const double dx = p.x - foot.centroids[k].x, dy = p.y - foot.centroids[k].y;
    const double d2 = dx * dx + dy * dy;
    if (d2 == 0.0) return f[foot.channels[k]];
    num += f[foot.channels[k]] / d2;
    den += 1.0 / d2;
  }
  return num / den;
}

}  // namespace

TEST_CASE("default layout is valid and mirrored") {
  const auto layout = default_layout();
  CHECK_NOTHROW(layout.validate());
  REQUIRE(layout.left.channels.size() == 18);
  REQUIRE(layout.right.channels.size() == 18);
  for (std::size_t k = 0; k < 18; ++k) {
    CHECK(layout.left.channels[k] == k);
    CHECK(layout.right.channels[k] == k + 18);
    CHECK(layout.right.centroids[k].x == doctest::Approx(1.0 - layout.left.centroids[k].x));
    CHECK(layout.right.centroids[k].y == layout.left.centroids[k].y);
    CHECK(inside_polygon(layout.left.centroids[k], layout.left.outline));
  }
}

TEST_CASE("layout validation and file round trip") {
  testutil::TempDir dir;
  auto layout = default_layout();
  write_layout(dir / "layout.json", layout);
  const auto back = read_layout(dir / "layout.json");
  for (std::size_t k = 0; k < 18; ++k) {
    CHECK(back.right.centroids[k].x == doctest::Approx(layout.right.centroids[k].x));
    CHECK(back.left.channels[k] == layout.left.channels[k]);
  }
  auto bad = layout;
  bad.left.centroids[3] = {-0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = layout;
  bad.left.channels[4] = bad.left.channels[5];
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = layout;
  bad.right.channels.pop_back();
  bad.right.centroids.pop_back();
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("shipped layout file matches the built-in layout") {
  const auto path = std::filesystem::path(LIFTLOAD_TEST_DATA).parent_path().parent_path() / "data" / "layout.json";
  const auto file = read_layout(path);
  const auto builtin = default_layout();
  for (std::size_t k = 0; k < 18; ++k) {
    CHECK(file.left.centroids[k].x == doctest::Approx(builtin.left.centroids[k].x));
    CHECK(file.right.centroids[k].y == doctest::Approx(builtin.right.centroids[k].y));
  }
}

TEST_CASE("colour scale from population statistics") {
  FeatureVector a{}, b{};
  a.fill(-1.0);
  b.fill(1.0);
  const std::vector<FeatureVector> two{a, b};
  const auto s = fit_color_scale(two);
  CHECK(s.mean == doctest::Approx(0.0));
  CHECK(s.stddev == doctest::Approx(1.0));
  CHECK(s.v_min == doctest::Approx(-2.0));
  CHECK(s.v_max == doctest::Approx(2.0));

  FeatureVector five{};
  five.fill(5.0);
  const std::vector<FeatureVector> flat{five, five, five};
  try {
    fit_color_scale(flat);
    FAIL("expected DegenerateScale");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateScale);
  }
  CHECK_THROWS_AS(fit_color_scale(std::vector<FeatureVector>{a}), Error);
}

TEST_CASE("colour scale matches a two-pass oracle on a large set") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(800.0, 350.0);
  std::vector<FeatureVector> samples(5000);
  for (auto& s : samples) {
    for (auto& v : s) v = n(rng);
  }
  long double sum = 0;
  for (const auto& s : samples) {
    for (double v : s) sum += v;
  }
  const double count = static_cast<double>(samples.size() * kChannelCount);
  const double mean = static_cast<double>(sum / count);
  long double ss = 0;
  for (const auto& s : samples) {
    for (double v : s) ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(static_cast<double>(ss / count));
  const auto scale = fit_color_scale(samples);
  CHECK(std::abs(scale.mean - mean) < 1e-9 * std::abs(mean));
  CHECK(std::abs(scale.stddev - sd) < 1e-9 * sd);
}

TEST_CASE("colour mapping is monotone, clipped and runs blue to red") {
  const auto scale = ColorScale::from_range(-2.0, 2.0);
  CHECK(scale.position(0.0) == 0.5);
  CHECK(scale.position(10.0) == 1.0);
  CHECK(scale.position(-10.0) == 0.0);
  double prev = -1.0;
  std::array<double, 3> prev_rgb{-1, -1, -1};
  for (int i = 0; i <= 400; ++i) {
    const double v = -2.0 + 4.0 * i / 400.0;
    const double t = scale.position(v);
    CHECK(t > prev);
    const auto rgb = gradient_rgb(t);
    CHECK(rgb != prev_rgb);
    prev = t;
    prev_rgb = rgb;
  }
  const auto lo = scale.color(-5.0), hi = scale.color(5.0);
  CHECK(lo[2] > 100);
  CHECK(lo[0] == 0);
  CHECK(hi[0] > 100);
  CHECK(hi[2] == 0);
  CHECK(scale.color(3.0) == scale.color(2.0));
}

TEST_CASE("IDW field matches direct evaluation and respects bounds") {
  const auto layout = default_layout();
  const auto f = golden_features();
  const auto field = interpolate_map(f, layout, 64);
  CHECK(field.width == 128);
  CHECK(field.height == 64);
  const double lo = *std::min_element(f.begin(), f.end());
  const double hi = *std::max_element(f.begin(), f.end());
  std::size_t inside = 0;
  for (std::size_t row = 0; row < 64; ++row) {
    for (std::size_t col = 0; col < 128; ++col) {
      const auto& foot = col < 64 ? layout.left : layout.right;
      const auto p = cell_center(col % 64, row, 64);
      const double v = field.at(col, row);
      if (!inside_polygon(p, foot.outline)) {
        CHECK(Field::is_background(v));
        continue;
      }
      ++inside;
      CHECK(v == doctest::Approx(oracle_idw(foot, f, p)).epsilon(1e-12));
      CHECK(v >= lo - 1e-9);
      CHECK(v <= hi + 1e-9);
    }
  }
  CHECK(inside > 1000);
}

TEST_CASE("constant features give a constant field; centroids are exact") {
  const auto layout = default_layout();
  FeatureVector c{};
  c.fill(123.0);
  const auto field = interpolate_map(c, layout, 48);
  for (double v : field.values) {
    if (!Field::is_background(v)) CHECK(v == doctest::Approx(123.0).epsilon(1e-12));
  }
  const auto f = golden_features();
  for (std::size_t k = 0; k < 18; ++k) {
    CHECK(idw_value(layout.left, f, layout.left.centroids[k]) == f[k]);
    CHECK(idw_value(layout.right, f, layout.right.centroids[k]) == f[k + 18]);
  }
}

TEST_CASE("single active channel decays along rays from its centroid") {
  const auto layout = default_layout();
  const auto& foot = layout.left;
  for (std::size_t k = 0; k < 18; ++k) {
    FeatureVector f{};
    f[foot.channels[k]] = 1.0;
    const auto ck = foot.centroids[k];
    double nearest = 1e9;
    for (std::size_t j = 0; j < 18; ++j) {
      if (j != k) nearest = std::min(nearest, std::hypot(foot.centroids[j].x - ck.x, foot.centroids[j].y - ck.y));
    }
    // Beyond half the distance to the nearest neighbour a ray may approach
    // another centroid, after which IDW is no longer monotone.
    const double reach = 0.5 * nearest;
    for (int dir = 0; dir < 16; ++dir) {
      const double a = 2.0 * std::numbers::pi * dir / 16.0;
      double prev = idw_value(foot, f, ck);
      CHECK(prev == 1.0);
      for (int s = 1; s <= 50; ++s) {
        const Point p{ck.x + reach * s / 50.0 * std::cos(a), ck.y + reach * s / 50.0 * std::sin(a)};
        if (!inside_polygon(p, foot.outline)) break;
        const double v = idw_value(foot, f, p);
        CHECK(v < prev);
        CHECK(v == doctest::Approx(oracle_idw(foot, f, p)).epsilon(1e-12));
        prev = v;
      }
    }
  }
}

TEST_CASE("zero field renders the mid-scale colour; large values clip to red") {
  const auto layout = default_layout();
  const auto scale = ColorScale::from_range(-2.0, 2.0);
  FeatureVector zero{};
  const auto img = render_sample(zero, layout, scale);
  REQUIRE(img.width == 224);
  REQUIRE(img.height == 224);
  const auto mid = scale.color(0.0);
  const std::array<std::uint8_t, 3> bg{0, 0, 0};
  std::size_t fg = 0;
  for (std::size_t y = 0; y < 224; ++y) {
    for (std::size_t x = 0; x < 224; ++x) {
      const auto* p = img.at(x, y);
      const std::array<std::uint8_t, 3> px{p[0], p[1], p[2]};
      CHECK((px == mid || px == bg));
      fg += px == mid;
    }
  }
  CHECK(fg > 224 * 224 / 4);

  FeatureVector big{};
  big.fill(50.0);
  const auto red = render_sample(big, layout, scale);
  const auto top = scale.color(2.0);
  for (std::size_t i = 0; i < red.pixels.size(); i += 3) {
    const std::array<std::uint8_t, 3> px{red.pixels[i], red.pixels[i + 1], red.pixels[i + 2]};
    CHECK((px == top || px == bg));
  }
}

TEST_CASE("rendering is a pure function and matches the golden image") {
  const auto layout = default_layout();
  const auto scale = ColorScale::from_range(-700.0, 900.0);
  const auto a = render_sample(golden_features(), layout, scale);
  const auto b = render_sample(golden_features(), layout, scale);
  CHECK(a == b);
  CHECK(encode_png(a) == encode_png(b));
  if (std::getenv("LIFTLOAD_UPDATE_GOLDEN")) write_png(kGolden, a);
  REQUIRE(std::filesystem::exists(kGolden));
  CHECK(read_png(kGolden) == a);

  testutil::TempDir dir;
  write_png(dir / "x.png", a);
  CHECK(read_png(dir / "x.png") == a);
}
