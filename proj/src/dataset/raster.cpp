#include "detaug/raster.hpp"

#include "detaug/error.hpp"

#include <string>

namespace detaug {

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    fail(ErrorCode::ShapeMismatch,
         "raster dimensions must be positive, got " + std::to_string(width) + "x" +
             std::to_string(height));
  }
  bytes_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < bytes_.size(); i += 3) {
    bytes_[i] = fill.r;
    bytes_[i + 1] = fill.g;
    bytes_[i + 2] = fill.b;
  }
}

}  // namespace detaug
