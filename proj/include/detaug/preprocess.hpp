#pragma once

#include "detaug/dataset.hpp"
#include "detaug/palette.hpp"
#include "detaug/raster.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace detaug {

struct CannyParams {
  double gaussian_sigma = 1.4;
  int low_threshold = 50;
  int high_threshold = 150;

  void validate() const;
  std::string canonical() const;
};

struct SegmentationParams {
  double scale = 300.0;
  int min_region_size = 50;

  void validate() const;
  std::string canonical() const;
};

// Integer Gaussian taps round(15 * exp(-(dx^2+dy^2) / 2 sigma^2)) over a
// (2r+1)^2 window, r = max(1, round(1.5 sigma)). At sigma = 1.4 this is the
// classic 5x5 kernel with weight sum 159.
struct GaussianKernel {
  int radius = 0;
  std::vector<int> taps;  // row-major (2r+1)^2
  int sum = 0;
};
GaussianKernel gaussian_kernel(double sigma);

// Binary edge map (0/255 replicated over RGB). Stages: integer luma
// (299R + 587G + 114B + 500) / 1000, integer Gaussian smoothing, 3x3 Sobel,
// 4-direction non-maximum suppression, 8-connected hysteresis. Thresholds
// apply to the L2 Sobel magnitude of the smoothed 8-bit gray image. All
// convolutions replicate the border.
RasterImage canny_edges(const RasterImage& image, const CannyParams& params);

RasterImage make_cfi(const RasterImage& real, const CannyParams& params);

struct Segmentation {
  Grid<int> labels;  // region ids, 0..region_count-1 in raster order of first appearance
  int region_count = 0;
  std::vector<Rgb> means;  // rounded mean input color per region
};

// Graph-based greedy region merging over the 8-connected pixel graph with
// RGB Euclidean edge weights. Components A, B merge across edge weight w when
// w <= min(Int(A) + scale/|A|, Int(B) + scale/|B|); afterwards, components
// smaller than min_region_size are merged along the cheapest remaining edges.
Segmentation segment_regions(const RasterImage& image, const SegmentationParams& params);

// Each pixel replaced by the mean color of its region.
RasterImage make_sfi(const RasterImage& real, const SegmentationParams& params);

// Fixed display palette: class k -> HSV(k * 360 / K, 1, 1); sentinel kept.
ClassPalette converted_palette(const ClassPalette& palette);

struct ColorConversion {
  RasterImage raster;
  ClassPalette palette;
};
ColorConversion color_convert(const AnnotationMap& map, const ClassPalette& palette);

struct CompositeFeature {
  RasterImage raster;
  Mask mask;  // 1 where the pixel came from the annotation
};

// Annotated pixels take the converted class color; the rest copy `detail`.
CompositeFeature overlay(const AnnotationMap& ppa, const RasterImage& detail, const ClassPalette& palette);

Rgb hsv_to_rgb(double hue_degrees, double saturation, double value);

}  // namespace detaug
