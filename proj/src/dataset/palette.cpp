#include "detaug/palette.hpp"

#include "detaug/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

namespace detaug {

namespace {

int squared_distance(Rgb a, Rgb b) {
  const int dr = int(a.r) - int(b.r);
  const int dg = int(a.g) - int(b.g);
  const int db = int(a.b) - int(b.b);
  return dr * dr + dg * dg + db * db;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(Rgb color) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", color.r, color.g, color.b);
  return buf;
}

Rgb parse_hex(std::string_view text) {
  if (!text.empty() && text.front() == '#') text.remove_prefix(1);
  if (text.size() != 6) fail(ErrorCode::ParseError, "bad hex color '" + std::string(text) + "'");
  std::uint8_t v[3];
  for (int i = 0; i < 3; ++i) {
    const int hi = hex_digit(text[2 * i]);
    const int lo = hex_digit(text[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(ErrorCode::ParseError, "bad hex color '" + std::string(text) + "'");
    v[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return {v[0], v[1], v[2]};
}

ClassPalette::ClassPalette(std::vector<PaletteEntry> entries, Rgb sentinel)
    : entries_(std::move(entries)), sentinel_(sentinel) {
  if (entries_.empty()) fail(ErrorCode::InvalidConfig, "palette has no classes");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].class_id != static_cast<int>(i)) {
      fail(ErrorCode::InvalidConfig, "palette class ids must be dense 0..K-1 in order");
    }
    if (entries_[i].color == sentinel_) {
      fail(ErrorCode::InvalidConfig, "class '" + entries_[i].class_name + "' uses the sentinel color");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (entries_[i].color == entries_[j].color) {
        fail(ErrorCode::InvalidConfig, "duplicate palette color " + to_hex(entries_[i].color));
      }
    }
  }
}

const PaletteEntry& ClassPalette::entry(int class_id) const {
  if (!contains(class_id)) fail(ErrorCode::InvalidColor, "unknown class id " + std::to_string(class_id));
  return entries_[static_cast<std::size_t>(class_id)];
}

std::optional<int> ClassPalette::find_class(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.class_name == name) return e.class_id;
  }
  return std::nullopt;
}

std::optional<int> ClassPalette::lookup(Rgb color) const noexcept {
  if (color == sentinel_) return -1;
  for (const auto& e : entries_) {
    if (e.color == color) return e.class_id;
  }
  return std::nullopt;
}

int ClassPalette::nearest(Rgb color) const noexcept {
  int best = -1;
  int best_d = squared_distance(color, sentinel_);
  for (const auto& e : entries_) {
    const int d = squared_distance(color, e.color);
    if (d < best_d) {
      best_d = d;
      best = e.class_id;
    }
  }
  return best;
}

nlohmann::json ClassPalette::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& e : entries_) {
    classes.push_back({{"class_id", e.class_id}, {"class_name", e.class_name}, {"color", to_hex(e.color)}});
  }
  return {{"sentinel", to_hex(sentinel_)}, {"classes", classes}};
}

ClassPalette ClassPalette::from_json(const nlohmann::json& j) {
  try {
    std::vector<PaletteEntry> entries;
    for (const auto& c : j.at("classes")) {
      entries.push_back({c.at("class_id").get<int>(), c.at("class_name").get<std::string>(),
                         parse_hex(c.at("color").get<std::string>())});
    }
    std::sort(entries.begin(), entries.end(),
              [](const PaletteEntry& a, const PaletteEntry& b) { return a.class_id < b.class_id; });
    return ClassPalette(std::move(entries), parse_hex(j.value("sentinel", std::string("#000000"))));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("palette: ") + e.what());
  }
}

ClassPalette ClassPalette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open palette file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ClassPalette::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write palette file " + path.string());
  out << to_json().dump(2) << '\n';
}

ClassPalette ClassPalette::isaid_default() {
  // Colors drawn from the {0,128,255}^3 lattice, avoiding black and white.
  static const std::pair<const char*, Rgb> kClasses[] = {
      {"ship", {255, 0, 0}},
      {"storage_tank", {0, 255, 0}},
      {"baseball_diamond", {0, 0, 255}},
      {"tennis_court", {255, 255, 0}},
      {"basketball_court", {255, 0, 255}},
      {"ground_track_field", {0, 255, 255}},
      {"bridge", {128, 0, 0}},
      {"large_vehicle", {0, 128, 0}},
      {"small_vehicle", {0, 0, 128}},
      {"helicopter", {255, 128, 0}},
      {"swimming_pool", {128, 0, 255}},
      {"roundabout", {0, 255, 128}},
      {"soccer_ball_field", {128, 128, 255}},
      {"plane", {255, 128, 128}},
      {"harbor", {128, 255, 0}},
  };
  std::vector<PaletteEntry> entries;
  int id = 0;
  for (const auto& [name, color] : kClasses) entries.push_back({id++, name, color});
  return ClassPalette(std::move(entries), Rgb{0, 0, 0});
}

}  // namespace detaug
