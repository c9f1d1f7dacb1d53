#pragma once

#include "detaug/palette.hpp"
#include "detaug/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace detaug {

inline constexpr std::int16_t kUnannotated = -1;

// Per-pixel class ids; kUnannotated marks pixels without a label.
using AnnotationMap = Grid<std::int16_t>;

struct PairedSample {
  std::string sample_id;
  AnnotationMap annotation;
  RasterImage real;
  std::optional<RasterImage> cfi;
  std::optional<RasterImage> sfi;
};

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

AnnotationMap decode_annotation(const RasterImage& raster, const ClassPalette& palette, bool strict);
RasterImage encode_annotation(const AnnotationMap& map, const ClassPalette& palette);

// Throws InvalidColor when a label is neither kUnannotated nor a palette class.
void validate_annotation(const AnnotationMap& map, const ClassPalette& palette);

std::size_t count_annotated(const AnnotationMap& map);

struct DropClasses {
  std::set<int> class_ids;
};
struct DropFraction {
  double fraction = 0.0;
  std::uint64_t seed = 0;
};
using PpaPolicy = std::variant<DropClasses, DropFraction>;

// Removes labels according to policy. Never adds labels. Deterministic in seed.
AnnotationMap simulate_ppa(const AnnotationMap& map, const PpaPolicy& policy,
                           const ClassPalette& palette);

struct DatasetLoad {
  std::vector<PairedSample> samples;  // sorted by sample_id
  std::vector<std::string> unmatched;  // files without a partner, relative to the split dir
};

// Reads <root>/<split>/images/<id>.png paired with <root>/<split>/masks/<id>.png.
DatasetLoad load_dataset(const std::filesystem::path& root, Split split,
                         const ClassPalette& palette, bool strict = true);

// Writes a sample in the on-disk layout load_dataset reads.
void save_sample(const std::filesystem::path& root, Split split, const PairedSample& sample,
                 const ClassPalette& palette);

}  // namespace detaug
