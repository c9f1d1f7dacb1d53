#pragma once

#include "detaug/dataset.hpp"
#include "detaug/raster.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Straightforward textbook Canny: padded arrays, 2-D Gaussian taps computed
// here, rational direction bins, sweep-to-fixpoint hysteresis.
detaug::RasterImage canny(const detaug::RasterImage& image, double sigma, int low, int high);

// HSV(k * 360 / K, 1, 1) as bytes, via the sector table.
detaug::Rgb hue_color(int k, int class_count);

detaug::RasterImage random_noise(int w, int h, std::mt19937_64& rng);
// Steps, ramps, disks, a checkerboard and a flat image; 10 in total.
std::vector<detaug::RasterImage> structured_images(int side);

detaug::AnnotationMap random_annotation(int w, int h, int class_count, double unlabeled, std::mt19937_64& rng);

}  // namespace oracle

namespace testing {

std::filesystem::path data_dir();

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
