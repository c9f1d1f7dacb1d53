#include "support/oracles.hpp"

#include "detaug/detail_cache.hpp"
#include "detaug/error.hpp"
#include "detaug/fixture.hpp"
#include "detaug/image_io.hpp"
#include "detaug/preprocess.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

using namespace detaug;

namespace {

bool binary(const RasterImage& img) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Rgb c = img.pixel(x, y);
      if (!(c == Rgb{0, 0, 0} || c == Rgb{255, 255, 255})) return false;
    }
  }
  return true;
}

RasterImage blobs(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pos(8, side - 8), rad(3, 8), col(0, 255);
  RasterImage img(side, side, {90, 110, 70});
  for (int b = 0; b < 5; ++b) {
    const int cx = pos(rng), cy = pos(rng), r = rad(rng);
    const Rgb c{static_cast<std::uint8_t>(col(rng)), static_cast<std::uint8_t>(col(rng)), static_cast<std::uint8_t>(col(rng))};
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.set_pixel(x, y, c);
      }
    }
  }
  return img;
}

}  // namespace

TEST_CASE("gaussian kernel at sigma 1.4 is the classic 5x5") {
  const GaussianKernel k = gaussian_kernel(1.4);
  const std::vector<int> classic{2, 4, 5, 4, 2, 4, 9, 12, 9, 4, 5, 12, 15, 12, 5, 4, 9, 12, 9, 4, 2, 4, 5, 4, 2};
  CHECK(k.radius == 2);
  CHECK(k.taps == classic);
  CHECK(k.sum == 159);
}

TEST_CASE("canny params validation") {
  CHECK_THROWS_AS(canny_edges(RasterImage(4, 4), CannyParams{0.0, 50, 150}), Error);
  CHECK_THROWS_AS(canny_edges(RasterImage(4, 4), CannyParams{1.4, 150, 50}), Error);
  CHECK_THROWS_AS(canny_edges(RasterImage(4, 4), CannyParams{1.4, 50, 256}), Error);
}

TEST_CASE("canny matches the oracle across parameters") {
  std::mt19937_64 rng(8);
  for (const CannyParams p : {CannyParams{}, CannyParams{0.8, 20, 60}, CannyParams{2.0, 10, 200}}) {
    for (int t = 0; t < 20; ++t) {
      const RasterImage img = t % 2 ? oracle::random_noise(16 + t, 12, rng) : blobs(32, static_cast<std::uint64_t>(t));
      const RasterImage got = canny_edges(img, p);
      CHECK(got == oracle::canny(img, p.gaussian_sigma, p.low_threshold, p.high_threshold));
      CHECK(binary(got));
    }
  }
}

TEST_CASE("canny on constant and step images") {
  CHECK(canny_edges(RasterImage(20, 20, {77, 10, 200}), {}) == RasterImage(20, 20));
  CHECK(make_cfi(RasterImage(8, 8, {5, 5, 5}), {}) == RasterImage(8, 8));

  RasterImage step(32, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 16; x < 32; ++x) step.set_pixel(x, y, {255, 255, 255});
  }
  const RasterImage e = canny_edges(step, {});
  std::set<int> columns;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (e.pixel(x, y).r == 255) columns.insert(x);
    }
  }
  REQUIRE_FALSE(columns.empty());
  CHECK(columns.size() <= 2);
  CHECK(*columns.begin() >= 14);
  CHECK(*columns.rbegin() <= 17);
  CHECK(e == oracle::canny(step, 1.4, 50, 150));
}

TEST_CASE("canny is translation equivariant on interiors") {
  const CannyParams p;
  const int margin = 2 * static_cast<int>(std::ceil(3 * p.gaussian_sigma));
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const RasterImage img = blobs(48, seed);
    const int dx = static_cast<int>(seed % 3) + 1, dy = static_cast<int>(seed % 2) * 2 - 1;
    RasterImage shifted(48, 48);
    for (int y = 0; y < 48; ++y) {
      for (int x = 0; x < 48; ++x) shifted.set_pixel(x, y, img.pixel(std::clamp(x - dx, 0, 47), std::clamp(y - dy, 0, 47)));
    }
    const RasterImage a = canny_edges(img, p);
    const RasterImage b = canny_edges(shifted, p);
    int diffs = 0;
    for (int y = margin; y < 48 - margin; ++y) {
      for (int x = margin; x < 48 - margin; ++x) {
        const int sx = x - dx, sy = y - dy;
        if (sx < margin || sy < margin || sx >= 48 - margin || sy >= 48 - margin) continue;
        diffs += !(b.pixel(x, y) == a.pixel(sx, sy));
      }
    }
    CHECK(diffs == 0);
  }
}

TEST_CASE("segmentation of trivial images") {
  const RasterImage flat(16, 16, {40, 80, 120});
  const Segmentation s = segment_regions(flat, {});
  CHECK(s.region_count == 1);
  CHECK(make_sfi(flat, {}) == flat);

  RasterImage halves(20, 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 10; x < 20; ++x) halves.set_pixel(x, y, {255, 255, 255});
  }
  const Segmentation h = segment_regions(halves, {});
  CHECK(h.region_count == 2);
  CHECK(h.labels.at(0, 0) == 0);
  CHECK(h.labels.at(19, 9) == 1);
  CHECK(make_sfi(halves, {}) == halves);
}

TEST_CASE("segmentation properties") {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    RasterImage img = blobs(40, seed);
    const RasterImage noise = oracle::random_noise(40, 40, rng);
    for (std::size_t i = 0; i < img.bytes().size(); ++i) {
      img.bytes()[i] = static_cast<std::uint8_t>(std::clamp(img.bytes()[i] + noise.bytes()[i] / 16 - 8, 0, 255));
    }
    const SegmentationParams p{200.0, 20};
    const Segmentation seg = segment_regions(img, p);
    const RasterImage sfi = make_sfi(img, p);
    CHECK(seg.region_count >= 1);
    CHECK(seg.region_count <= 40 * 40);

    std::map<int, std::array<double, 4>> sums;
    std::vector<int> sizes(static_cast<std::size_t>(seg.region_count), 0);
    int next_new = 0;
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 40; ++x) {
        const int l = seg.labels.at(x, y);
        REQUIRE(l >= 0);
        REQUIRE(l < seg.region_count);
        if (l == next_new) ++next_new;
        CHECK(l < next_new);
        ++sizes[static_cast<std::size_t>(l)];
        const Rgb c = img.pixel(x, y);
        auto& acc = sums[l];
        acc[0] += c.r;
        acc[1] += c.g;
        acc[2] += c.b;
        acc[3] += 1;
        CHECK(sfi.pixel(x, y) == seg.means[static_cast<std::size_t>(l)]);
      }
    }
    for (const auto& [l, acc] : sums) {
      const Rgb m = seg.means[static_cast<std::size_t>(l)];
      CHECK(std::fabs(m.r - acc[0] / acc[3]) <= 1.0);
      CHECK(std::fabs(m.g - acc[1] / acc[3]) <= 1.0);
      CHECK(std::fabs(m.b - acc[2] / acc[3]) <= 1.0);
    }
    for (int sz : sizes) CHECK(sz >= p.min_region_size);
    CHECK(segment_regions(img, p).labels == seg.labels);
  }
}

TEST_CASE("color_convert") {
  const ClassPalette p = ClassPalette::isaid_default();
  const ClassPalette conv = converted_palette(p);
  std::set<std::tuple<int, int, int>> colors;
  for (const auto& e : conv.entries()) {
    CHECK(e.color == oracle::hue_color(e.class_id, 15));
    colors.insert({e.color.r, e.color.g, e.color.b});
  }
  CHECK(colors.size() == 15);
  CHECK(conv.sentinel() == p.sentinel());

  const ColorConversion blank = color_convert(AnnotationMap(5, 5, kUnannotated), p);
  CHECK(blank.raster == RasterImage(5, 5, p.sentinel()));

  std::mt19937_64 rng(6);
  for (int t = 0; t < 30; ++t) {
    const AnnotationMap m = oracle::random_annotation(12, 9, 15, 0.5, rng);
    const ColorConversion c = color_convert(m, p);
    CHECK(decode_annotation(c.raster, c.palette, true) == m);
  }
}

TEST_CASE("overlay cases") {
  const ClassPalette p = ClassPalette::isaid_default();
  std::mt19937_64 rng(12);
  const RasterImage detail = oracle::random_noise(10, 10, rng);

  const AnnotationMap full = oracle::random_annotation(10, 10, 15, 0.0, rng);
  const CompositeFeature a = overlay(full, detail, p);
  CHECK(a.raster == color_convert(full, p).raster);
  for (auto v : a.mask.cells()) CHECK(v == 1);

  const CompositeFeature b = overlay(AnnotationMap(10, 10, kUnannotated), detail, p);
  CHECK(b.raster == detail);
  for (auto v : b.mask.cells()) CHECK(v == 0);

  AnnotationMap checker(10, 10, kUnannotated);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      if ((x + y) % 2 == 0) checker.at(x, y) = static_cast<std::int16_t>((x * 3 + y) % 15);
    }
  }
  const CompositeFeature c = overlay(checker, detail, p);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      const bool on = (x + y) % 2 == 0;
      CHECK(c.mask.at(x, y) == (on ? 1 : 0));
      CHECK(c.raster.pixel(x, y) == (on ? oracle::hue_color((x * 3 + y) % 15, 15) : detail.pixel(x, y)));
    }
  }

  try {
    overlay(checker, RasterImage(10, 11), p);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("detail caches") {
  const ClassPalette p = ClassPalette::isaid_default();
  testing::TempDir tmp;
  auto samples = make_synthetic_dataset(3, 32, 1, p);

  CacheStats s = ensure_cfi_cache(tmp.path(), Split::Train, samples, {});
  CHECK(s.generated == 3);
  CHECK(s.reused == 0);
  REQUIRE(samples[0].cfi.has_value());
  CHECK(*samples[0].cfi == make_cfi(samples[0].real, {}));
  const auto file = tmp.path() / "train" / "cfi" / (samples[0].sample_id + ".png");
  CHECK(read_png(file) == *samples[0].cfi);

  s = ensure_cfi_cache(tmp.path(), Split::Train, samples, {});
  CHECK(s.reused == 3);
  CHECK(s.generated == 0);

  s = ensure_cfi_cache(tmp.path(), Split::Train, samples, CannyParams{1.0, 30, 90});
  CHECK(s.generated == 3);
  CHECK(*samples[1].cfi == make_cfi(samples[1].real, CannyParams{1.0, 30, 90}));

  s = ensure_sfi_cache(tmp.path(), Split::Train, samples, {});
  CHECK(s.generated == 3);
  CHECK(read_png(tmp.path() / "train" / "sfi" / (samples[2].sample_id + ".png")) == make_sfi(samples[2].real, {}));
}
