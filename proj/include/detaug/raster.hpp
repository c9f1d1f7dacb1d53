#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace detaug {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Row-major H x W grid of cells.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), cells_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return cells_.size(); }

  T& at(int x, int y) { return cells_[index(x, y)]; }
  const T& at(int x, int y) const { return cells_[index(x, y)]; }

  std::span<T> cells() noexcept { return cells_; }
  std::span<const T> cells() const noexcept { return cells_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> cells_;
};

// 8-bit, 3-channel interleaved RGB raster.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return bytes_.empty(); }
  bool same_shape(const RasterImage& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  Rgb pixel(int x, int y) const noexcept {
    const std::size_t i = offset(x, y);
    return {bytes_[i], bytes_[i + 1], bytes_[i + 2]};
  }
  void set_pixel(int x, int y, Rgb c) noexcept {
    const std::size_t i = offset(x, y);
    bytes_[i] = c.r;
    bytes_[i + 1] = c.g;
    bytes_[i + 2] = c.b;
  }

  std::span<std::uint8_t> bytes() noexcept { return bytes_; }
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bytes_;
};

using Mask = Grid<std::uint8_t>;

}  // namespace detaug
