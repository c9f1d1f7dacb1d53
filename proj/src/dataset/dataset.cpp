#include "detaug/dataset.hpp"

#include "detaug/error.hpp"
#include "detaug/image_io.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace detaug {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  fail(ErrorCode::InvalidConfig, "unknown split '" + std::string(text) + "'");
}

AnnotationMap decode_annotation(const RasterImage& raster, const ClassPalette& palette, bool strict) {
  AnnotationMap map(raster.width(), raster.height(), kUnannotated);
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      const Rgb c = raster.pixel(x, y);
      auto id = palette.lookup(c);
      if (!id) {
        if (strict) {
          fail(ErrorCode::InvalidColor, "off-palette color " + to_hex(c) + " at (" +
                                            std::to_string(x) + "," + std::to_string(y) + ")");
        }
        id = palette.nearest(c);
      }
      map.at(x, y) = static_cast<std::int16_t>(*id);
    }
  }
  return map;
}

RasterImage encode_annotation(const AnnotationMap& map, const ClassPalette& palette) {
  RasterImage out(map.width(), map.height(), palette.sentinel());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const int id = map.at(x, y);
      if (id != kUnannotated) out.set_pixel(x, y, palette.entry(id).color);
    }
  }
  return out;
}

void validate_annotation(const AnnotationMap& map, const ClassPalette& palette) {
  for (const auto id : map.cells()) {
    if (id != kUnannotated && !palette.contains(id)) {
      fail(ErrorCode::InvalidColor, "label " + std::to_string(id) + " not in palette");
    }
  }
}

std::size_t count_annotated(const AnnotationMap& map) {
  return static_cast<std::size_t>(
      std::count_if(map.cells().begin(), map.cells().end(), [](auto v) { return v != kUnannotated; }));
}

AnnotationMap simulate_ppa(const AnnotationMap& map, const PpaPolicy& policy,
                           const ClassPalette& palette) {
  AnnotationMap out = map;
  if (const auto* drop = std::get_if<DropClasses>(&policy)) {
    for (const int id : drop->class_ids) {
      if (!palette.contains(id)) fail(ErrorCode::InvalidPolicy, "unknown class id " + std::to_string(id));
    }
    for (auto& v : out.cells()) {
      if (v != kUnannotated && drop->class_ids.contains(v)) v = kUnannotated;
    }
    return out;
  }
  const auto& frac = std::get<DropFraction>(policy);
  if (!(frac.fraction >= 0.0 && frac.fraction <= 1.0)) {
    fail(ErrorCode::InvalidPolicy, "drop fraction must be in [0,1]");
  }
  // Raw 53-bit draws keep the sequence identical across standard libraries.
  std::mt19937_64 rng(frac.seed);
  for (auto& v : out.cells()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (v != kUnannotated && u < frac.fraction) v = kUnannotated;
  }
  return out;
}

DatasetLoad load_dataset(const fs::path& root, Split split, const ClassPalette& palette, bool strict) {
  const fs::path split_dir = root / std::string(to_string(split));
  std::map<std::string, fs::path> images;
  std::map<std::string, fs::path> masks;
  auto scan = [](const fs::path& dir, std::map<std::string, fs::path>& into) {
    if (!fs::is_directory(dir)) return;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        into.emplace(entry.path().stem().string(), entry.path());
      }
    }
  };
  scan(split_dir / "images", images);
  scan(split_dir / "masks", masks);

  DatasetLoad result;
  for (const auto& [id, image_path] : images) {
    const auto it = masks.find(id);
    if (it == masks.end()) {
      result.unmatched.push_back("images/" + id + ".png");
      continue;
    }
    PairedSample sample;
    sample.sample_id = id;
    sample.real = read_png(image_path);
    const RasterImage mask = read_png(it->second);
    if (!mask.same_shape(sample.real)) {
      fail(ErrorCode::DimensionMismatch, "sample '" + id + "': mask " + std::to_string(mask.width()) +
                                             "x" + std::to_string(mask.height()) + " vs image " +
                                             std::to_string(sample.real.width()) + "x" +
                                             std::to_string(sample.real.height()));
    }
    try {
      sample.annotation = decode_annotation(mask, palette, strict);
    } catch (const Error& e) {
      fail(e.code(), "sample '" + id + "': " + e.what());
    }
    result.samples.push_back(std::move(sample));
  }
  for (const auto& [id, path] : masks) {
    if (!images.contains(id)) result.unmatched.push_back("masks/" + id + ".png");
  }
  if (result.samples.empty()) {
    fail(ErrorCode::MissingData, "no image/mask pairs under " + split_dir.string());
  }
  return result;
}

void save_sample(const fs::path& root, Split split, const PairedSample& sample,
                 const ClassPalette& palette) {
  const fs::path split_dir = root / std::string(to_string(split));
  write_png(split_dir / "images" / (sample.sample_id + ".png"), sample.real);
  write_png(split_dir / "masks" / (sample.sample_id + ".png"), encode_annotation(sample.annotation, palette));
}

}  // namespace detaug
