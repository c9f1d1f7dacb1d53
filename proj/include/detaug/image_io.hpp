#pragma once

#include "detaug/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace detaug {

// PNG codec for 8-bit RGB rasters. Gray and RGBA inputs are converted to RGB.
RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& image);

RasterImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace detaug
