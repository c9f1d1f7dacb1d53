#include "detaug/preprocess.hpp"

#include "detaug/error.hpp"

#include <cmath>

namespace detaug {

Rgb hsv_to_rgb(double hue_degrees, double saturation, double value) {
  const double h = std::fmod(hue_degrees, 360.0) / 60.0;
  const double c = value * saturation;
  const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
  const double m = value - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  auto to_byte = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {to_byte(r + m), to_byte(g + m), to_byte(b + m)};
}

ClassPalette converted_palette(const ClassPalette& palette) {
  std::vector<PaletteEntry> entries;
  const double k = static_cast<double>(palette.size());
  for (const auto& e : palette.entries()) {
    entries.push_back({e.class_id, e.class_name, hsv_to_rgb(e.class_id * 360.0 / k, 1.0, 1.0)});
  }
  return ClassPalette(std::move(entries), palette.sentinel());
}

ColorConversion color_convert(const AnnotationMap& map, const ClassPalette& palette) {
  ClassPalette converted = converted_palette(palette);
  RasterImage raster = encode_annotation(map, converted);
  return {std::move(raster), std::move(converted)};
}

CompositeFeature overlay(const AnnotationMap& ppa, const RasterImage& detail, const ClassPalette& palette) {
  if (ppa.width() != detail.width() || ppa.height() != detail.height()) {
    fail(ErrorCode::DimensionMismatch, "overlay: annotation " + std::to_string(ppa.width()) + "x" +
                                           std::to_string(ppa.height()) + " vs detail " +
                                           std::to_string(detail.width()) + "x" + std::to_string(detail.height()));
  }
  const ClassPalette converted = converted_palette(palette);
  CompositeFeature out{detail, Mask(ppa.width(), ppa.height(), 0)};
  for (int y = 0; y < ppa.height(); ++y) {
    for (int x = 0; x < ppa.width(); ++x) {
      const int id = ppa.at(x, y);
      if (id == kUnannotated) continue;
      out.raster.set_pixel(x, y, converted.entry(id).color);
      out.mask.at(x, y) = 1;
    }
  }
  return out;
}

}  // namespace detaug
