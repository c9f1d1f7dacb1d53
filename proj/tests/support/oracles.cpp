#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

using detaug::RasterImage;
using detaug::Rgb;

namespace {

struct Padded {
  int pad, w, h;
  std::vector<long long> v;

  Padded(int pad_, int w_, int h_) : pad(pad_), w(w_), h(h_), v(static_cast<std::size_t>(w_ + 2 * pad_) * (h_ + 2 * pad_)) {}
  long long& operator()(int x, int y) { return v[static_cast<std::size_t>(y + pad) * (w + 2 * pad) + x + pad]; }

  void replicate() {
    for (int y = -pad; y < h + pad; ++y) {
      for (int x = -pad; x < w + pad; ++x) {
        const int cx = x < 0 ? 0 : (x >= w ? w - 1 : x);
        const int cy = y < 0 ? 0 : (y >= h ? h - 1 : y);
        (*this)(x, y) = (*this)(cx, cy);
      }
    }
  }
};

}  // namespace

RasterImage canny(const RasterImage& image, double sigma, int low, int high) {
  const int w = image.width();
  const int h = image.height();

  int r = static_cast<int>(std::floor(1.5 * sigma + 0.5));
  if (r < 1) r = 1;
  std::vector<std::vector<long long>> g(2 * r + 1, std::vector<long long>(2 * r + 1));
  long long gsum = 0;
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      g[i + r][j + r] = static_cast<long long>(std::floor(15.0 * std::exp(-(i * i + j * j) / (2.0 * sigma * sigma)) + 0.5));
      gsum += g[i + r][j + r];
    }
  }

  Padded gray(r, w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Rgb c = image.pixel(x, y);
      gray(x, y) = (299LL * c.r + 587LL * c.g + 114LL * c.b + 500) / 1000;
    }
  }
  gray.replicate();

  Padded smooth(1, w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      long long acc = 0;
      for (int i = -r; i <= r; ++i) {
        for (int j = -r; j <= r; ++j) acc += g[i + r][j + r] * gray(x + j, y + i);
      }
      smooth(x, y) = acc;
    }
  }
  smooth.replicate();

  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  std::vector<long long> gx(static_cast<std::size_t>(w) * h), gy(gx.size());
  Padded mag2(1, w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      long long sx = 0, sy = 0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          sx += kx[i][j] * smooth(x + j - 1, y + i - 1);
          sy += ky[i][j] * smooth(x + j - 1, y + i - 1);
        }
      }
      gx[static_cast<std::size_t>(y) * w + x] = sx;
      gy[static_cast<std::size_t>(y) * w + x] = sy;
      mag2(x, y) = sx * sx + sy * sy;
    }
  }
  mag2.replicate();

  const double tan22 = std::sqrt(2.0) - 1.0;
  const double tan67 = std::sqrt(2.0) + 1.0;
  std::vector<double> thin(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const long long m = mag2(x, y);
      if (m == 0) continue;
      const long long sx = gx[static_cast<std::size_t>(y) * w + x];
      const long long sy = gy[static_cast<std::size_t>(y) * w + x];
      const double ax = std::fabs(static_cast<double>(sx));
      const double ay = std::fabs(static_cast<double>(sy));
      long long n1, n2;
      if (ay < tan22 * ax) {
        n1 = mag2(x + 1, y);
        n2 = mag2(x - 1, y);
      } else if (ay > tan67 * ax) {
        n1 = mag2(x, y + 1);
        n2 = mag2(x, y - 1);
      } else if ((sx > 0) == (sy > 0)) {
        n1 = mag2(x + 1, y + 1);
        n2 = mag2(x - 1, y - 1);
      } else {
        n1 = mag2(x - 1, y + 1);
        n2 = mag2(x + 1, y - 1);
      }
      if (m >= n1 && m >= n2) thin[static_cast<std::size_t>(y) * w + x] = std::sqrt(static_cast<double>(m));
    }
  }

  const double hi = static_cast<double>(high) * static_cast<double>(gsum);
  const double lo = static_cast<double>(low) * static_cast<double>(gsum);
  std::vector<int> state(thin.size(), 0);
  for (std::size_t i = 0; i < thin.size(); ++i) {
    if (thin[i] > 0 && thin[i] >= hi) state[i] = 1;
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (state[i] || !(thin[i] > 0 && thin[i] >= lo)) continue;
        for (int dy = -1; dy <= 1 && !state[i]; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (state[static_cast<std::size_t>(ny) * w + nx]) {
              state[i] = 1;
              changed = true;
              break;
            }
          }
        }
      }
    }
  }

  RasterImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (state[static_cast<std::size_t>(y) * w + x]) out.set_pixel(x, y, {255, 255, 255});
    }
  }
  return out;
}

Rgb hue_color(int k, int class_count) {
  const double hue = 360.0 * k / class_count;
  const int sector = static_cast<int>(hue / 60.0) % 6;
  const double f = hue / 60.0 - std::floor(hue / 60.0);
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = 1; g = f; b = 0; break;
    case 1: r = 1 - f; g = 1; b = 0; break;
    case 2: r = 0; g = 1; b = f; break;
    case 3: r = 0; g = 1 - f; b = 1; break;
    case 4: r = f; g = 0; b = 1; break;
    default: r = 1; g = 0; b = 1 - f; break;
  }
  auto byte = [](double v) { return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)); };
  return {byte(r), byte(g), byte(b)};
}

RasterImage random_noise(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 255);
  RasterImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.set_pixel(x, y, {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng))});
    }
  }
  return img;
}

std::vector<RasterImage> structured_images(int side) {
  std::vector<RasterImage> out;
  auto gray = [](int v) {
    const auto b = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    return Rgb{b, b, b};
  };
  auto make = [&](auto fn) {
    RasterImage img(side, side);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) img.set_pixel(x, y, fn(x, y));
    }
    out.push_back(std::move(img));
  };
  make([&](int x, int) { return gray(x < side / 2 ? 20 : 230); });
  make([&](int, int y) { return gray(y < side / 3 ? 240 : 10); });
  make([&](int x, int y) { return gray(x > y ? 200 : 40); });
  make([&](int x, int y) { return gray(x + y < side ? 0 : 255); });
  make([&](int x, int) { return gray(x * 255 / (side - 1)); });
  make([&](int x, int y) { return gray((x + y) * 255 / (2 * side - 2)); });
  make([&](int x, int y) {
    const int dx = x - side / 2, dy = y - side / 2;
    return gray(dx * dx + dy * dy <= (side * side) / 9 ? 250 : 30);
  });
  make([&](int x, int y) {
    const int dx = x - side / 3, dy = y - side / 2;
    return dx * dx + dy * dy <= (side * side) / 16 ? Rgb{255, 0, 0} : Rgb{0, 0, 255};
  });
  make([&](int x, int y) { return gray(((x / 4) + (y / 4)) % 2 ? 220 : 35); });
  make([&](int, int) { return gray(128); });
  return out;
}

detaug::AnnotationMap random_annotation(int w, int h, int class_count, double unlabeled, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, class_count - 1);
  detaug::AnnotationMap map(w, h, detaug::kUnannotated);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (u(rng) >= unlabeled) map.at(x, y) = static_cast<std::int16_t>(cls(rng));
    }
  }
  return map;
}

}  // namespace oracle

namespace testing {

std::filesystem::path data_dir() { return DETAUG_TEST_DATA; }

TempDir::TempDir() {
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() / ("detaug-test-" + std::to_string(rd()) + std::to_string(rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace testing
