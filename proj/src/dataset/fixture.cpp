#include "detaug/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace detaug {

namespace {

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }

 private:
  std::mt19937_64 rng_;
};

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

PairedSample make_synthetic_sample(const std::string& sample_id, int size, std::uint64_t seed,
                                   const ClassPalette& palette) {
  Draw draw(seed);
  PairedSample sample;
  sample.sample_id = sample_id;
  sample.annotation = AnnotationMap(size, size, kUnannotated);
  sample.real = RasterImage(size, size);

  // Background: soil/vegetation gradient plus per-pixel grain.
  const double base_r = 90 + 40 * draw.uniform();
  const double base_g = 100 + 40 * draw.uniform();
  const double base_b = 70 + 30 * draw.uniform();
  const double tilt = draw.uniform() * 2 * M_PI;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double wave = 25 * std::sin((std::cos(tilt) * x + std::sin(tilt) * y) * 6.0 / size);
      const double grain = 16 * (draw.uniform() - 0.5);
      sample.real.set_pixel(x, y, {clamp_byte(base_r + wave + grain), clamp_byte(base_g + wave + grain),
                                   clamp_byte(base_b + 0.5 * wave + grain)});
    }
  }

  const int shapes = draw.integer(2, 4);
  const int classes = static_cast<int>(std::min<std::size_t>(palette.size(), 6));
  for (int s = 0; s < shapes; ++s) {
    const int class_id = draw.integer(0, classes - 1);
    const Rgb tone = palette.entry(class_id).color;
    const int w = draw.integer(size / 8, size / 3);
    const int h = draw.integer(size / 8, size / 3);
    const int x0 = draw.integer(0, size - w);
    const int y0 = draw.integer(0, size - h);
    const bool ellipse = draw.uniform() < 0.5;
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        if (ellipse) {
          const double u = (x + 0.5 - x0 - w / 2.0) / (w / 2.0);
          const double v = (y + 0.5 - y0 - h / 2.0) / (h / 2.0);
          if (u * u + v * v > 1.0) continue;
        }
        sample.annotation.at(x, y) = static_cast<std::int16_t>(class_id);
        // Real appearance: muted version of the class tone with grain.
        const double grain = 12 * (draw.uniform() - 0.5);
        sample.real.set_pixel(x, y, {clamp_byte(60 + 0.6 * tone.r + grain), clamp_byte(60 + 0.6 * tone.g + grain),
                                     clamp_byte(60 + 0.6 * tone.b + grain)});
      }
    }
  }
  return sample;
}

std::vector<PairedSample> make_synthetic_dataset(int count, int size, std::uint64_t seed,
                                                 const ClassPalette& palette) {
  std::vector<PairedSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "shapes_%03d", i);
    out.push_back(make_synthetic_sample(id, size, seed * 1000003ULL + static_cast<std::uint64_t>(i), palette));
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& root, Split split, int count, int size,
                             std::uint64_t seed, const ClassPalette& palette) {
  for (const auto& sample : make_synthetic_dataset(count, size, seed, palette)) {
    save_sample(root, split, sample, palette);
  }
}

}  // namespace detaug
