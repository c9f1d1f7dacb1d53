#include "detaug/preprocess.hpp"

#include "detaug/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <vector>

namespace detaug {

void CannyParams::validate() const {
  if (!(gaussian_sigma > 0.0)) fail(ErrorCode::InvalidConfig, "canny sigma must be positive");
  if (low_threshold < 0 || high_threshold > 255 || low_threshold >= high_threshold) {
    fail(ErrorCode::InvalidConfig, "canny thresholds need 0 <= low < high <= 255");
  }
}

std::string CannyParams::canonical() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "canny sigma=%.17g low=%d high=%d", gaussian_sigma, low_threshold,
                high_threshold);
  return buf;
}

GaussianKernel gaussian_kernel(double sigma) {
  GaussianKernel k;
  k.radius = std::max(1, static_cast<int>(std::lround(1.5 * sigma)));
  const int side = 2 * k.radius + 1;
  k.taps.resize(static_cast<std::size_t>(side) * side);
  for (int dy = -k.radius; dy <= k.radius; ++dy) {
    for (int dx = -k.radius; dx <= k.radius; ++dx) {
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      const int tap = static_cast<int>(std::lround(15.0 * g));
      k.taps[static_cast<std::size_t>((dy + k.radius) * side + dx + k.radius)] = tap;
      k.sum += tap;
    }
  }
  return k;
}

namespace {

enum class Direction { Horizontal, Diagonal, Vertical, AntiDiagonal };

Direction quantize(std::int64_t gx, std::int64_t gy) {
  double angle = std::atan2(static_cast<double>(gy), static_cast<double>(gx)) * 180.0 / M_PI;
  if (angle < 0) angle += 180.0;
  if (angle < 22.5 || angle >= 157.5) return Direction::Horizontal;
  if (angle < 67.5) return Direction::Diagonal;
  if (angle < 112.5) return Direction::Vertical;
  return Direction::AntiDiagonal;
}

// Plane with replicate-border reads.
template <typename T>
struct Plane {
  int w = 0;
  int h = 0;
  std::vector<T> v;

  Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height) {}
  T& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
  T clamped(int x, int y) const {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return v[static_cast<std::size_t>(y) * w + x];
  }
};

}  // namespace

RasterImage canny_edges(const RasterImage& image, const CannyParams& params) {
  params.validate();
  const int w = image.width();
  const int h = image.height();

  Plane<std::int64_t> gray(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Rgb c = image.pixel(x, y);
      gray(x, y) = (299 * c.r + 587 * c.g + 114 * c.b + 500) / 1000;
    }
  }

  const GaussianKernel kernel = gaussian_kernel(params.gaussian_sigma);
  const int r = kernel.radius;
  const int side = 2 * r + 1;
  Plane<std::int64_t> smooth(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int ky = 0; ky < side; ++ky) {
        for (int kx = 0; kx < side; ++kx) {
          acc += kernel.taps[static_cast<std::size_t>(ky * side + kx)] * gray.clamped(x + kx - r, y + ky - r);
        }
      }
      smooth(x, y) = acc;
    }
  }

  // Gradients stay scaled by kernel.sum; thresholds are scaled to match.
  Plane<std::int64_t> mag2(w, h);
  Plane<std::int64_t> gx_plane(w, h);
  Plane<std::int64_t> gy_plane(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto s = [&](int dx, int dy) { return smooth.clamped(x + dx, y + dy); };
      const std::int64_t gx = (s(1, -1) + 2 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2 * s(-1, 0) + s(-1, 1));
      const std::int64_t gy = (s(-1, 1) + 2 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2 * s(0, -1) + s(1, -1));
      gx_plane(x, y) = gx;
      gy_plane(x, y) = gy;
      mag2(x, y) = gx * gx + gy * gy;
    }
  }

  Plane<std::int64_t> thin(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t m = mag2(x, y);
      if (m == 0) {
        thin(x, y) = 0;
        continue;
      }
      int ax = 0, ay = 0;
      switch (quantize(gx_plane(x, y), gy_plane(x, y))) {
        case Direction::Horizontal: ax = 1; ay = 0; break;
        case Direction::Diagonal: ax = 1; ay = 1; break;
        case Direction::Vertical: ax = 0; ay = 1; break;
        case Direction::AntiDiagonal: ax = -1; ay = 1; break;
      }
      const bool peak = m >= mag2.clamped(x + ax, y + ay) && m >= mag2.clamped(x - ax, y - ay);
      thin(x, y) = peak ? m : 0;
    }
  }

  const std::int64_t high = static_cast<std::int64_t>(params.high_threshold) * kernel.sum;
  const std::int64_t low = static_cast<std::int64_t>(params.low_threshold) * kernel.sum;
  const std::int64_t high2 = high * high;
  const std::int64_t low2 = low * low;

  std::vector<std::uint8_t> edge(static_cast<std::size_t>(w) * h, 0);
  std::vector<int> stack;
  for (int i = 0; i < w * h; ++i) {
    if (thin.v[static_cast<std::size_t>(i)] >= high2 && thin.v[static_cast<std::size_t>(i)] > 0) {
      edge[static_cast<std::size_t>(i)] = 1;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int cx = i % w;
    const int cy = i / w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = cx + dx;
        const int ny = cy + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int j = ny * w + nx;
        const std::int64_t m = thin.v[static_cast<std::size_t>(j)];
        if (!edge[static_cast<std::size_t>(j)] && m > 0 && m >= low2) {
          edge[static_cast<std::size_t>(j)] = 1;
          stack.push_back(j);
        }
      }
    }
  }

  RasterImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (edge[static_cast<std::size_t>(y * w + x)]) out.set_pixel(x, y, {255, 255, 255});
    }
  }
  return out;
}

RasterImage make_cfi(const RasterImage& real, const CannyParams& params) { return canny_edges(real, params); }

}  // namespace detaug
