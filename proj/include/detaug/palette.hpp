#pragma once

#include "detaug/raster.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace detaug {

struct PaletteEntry {
  int class_id = 0;
  std::string class_name;
  Rgb color;

  friend bool operator==(const PaletteEntry&, const PaletteEntry&) = default;
};

// Class-id -> color table plus the color used for unannotated pixels.
// Construction validates: ids dense 0..K-1 in order, all colors distinct,
// sentinel distinct from every class color.
class ClassPalette {
 public:
  ClassPalette(std::vector<PaletteEntry> entries, Rgb sentinel);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<PaletteEntry>& entries() const noexcept { return entries_; }
  const PaletteEntry& entry(int class_id) const;
  Rgb sentinel() const noexcept { return sentinel_; }
  bool contains(int class_id) const noexcept {
    return class_id >= 0 && static_cast<std::size_t>(class_id) < entries_.size();
  }

  std::optional<int> find_class(std::string_view name) const;

  // Exact lookup: class id, -1 for sentinel, nullopt when off-palette.
  std::optional<int> lookup(Rgb color) const noexcept;
  // Nearest palette color (sentinel included) by Euclidean RGB distance;
  // ties resolve to the sentinel first, then lowest class id.
  int nearest(Rgb color) const noexcept;

  nlohmann::json to_json() const;
  static ClassPalette from_json(const nlohmann::json& j);
  static ClassPalette load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // 15 iSAID categories on well-separated colors, black sentinel.
  static ClassPalette isaid_default();

  friend bool operator==(const ClassPalette&, const ClassPalette&) = default;

 private:
  std::vector<PaletteEntry> entries_;
  Rgb sentinel_;
};

std::string to_hex(Rgb color);
Rgb parse_hex(std::string_view text);

}  // namespace detaug
