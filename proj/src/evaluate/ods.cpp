#include "detaug/error.hpp"
#include "detaug/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace detaug {

LabelMap::LabelMap(std::map<std::string, std::string> mapping, std::vector<std::string> targets)
    : mapping_(mapping.begin(), mapping.end()), targets_(std::move(targets)) {
  for (const auto& t : targets_) mapping_.emplace(t, t);
  for (const auto& [raw, target] : mapping_) {
    if (!is_target(target)) fail(ErrorCode::UnknownTargetLabel, "'" + raw + "' maps to unknown target '" + target + "'");
  }
}

LabelMap LabelMap::from_json(const nlohmann::json& j) {
  try {
    return LabelMap(j.value("mapping", std::map<std::string, std::string>{}),
                    j.at("targets").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("label map: ") + e.what());
  }
}

LabelMap LabelMap::airport_default() {
  return LabelMap({{"Aeroplane", "Airplane"},
                   {"Jet", "Airplane"},
                   {"Airliner", "Airplane"},
                   {"Aviation", "Aircraft"},
                   {"Aerospace Manufacturer", "Building"},
                   {"Hangar", "Building"},
                   {"Airport Terminal", "Building"},
                   {"Car", "Vehicle"},
                   {"Truck", "Vehicle"},
                   {"Bus", "Vehicle"}},
                  {"Airplane", "Aircraft", "Building", "Vehicle"});
}

std::optional<std::string> LabelMap::map(std::string_view raw) const {
  const auto it = mapping_.find(raw);
  if (it == mapping_.end()) return std::nullopt;
  return it->second;
}

bool LabelMap::is_target(std::string_view label) const {
  return std::find(targets_.begin(), targets_.end(), label) != targets_.end();
}

double compute_ods(const std::vector<Detection>& detections, const LabelMap& label_map, std::string_view target,
                   double min_confidence) {
  if (!label_map.is_target(target)) fail(ErrorCode::UnknownTargetLabel, "'" + std::string(target) + "' is not a target label");
  double best = 0.0;
  for (const auto& d : detections) {
    if (d.confidence < min_confidence) continue;
    const auto mapped = label_map.map(d.label);
    if (mapped && *mapped == target) best = std::max(best, d.confidence);
  }
  return 100.0 * best;
}

namespace {

int method_rank(const std::string& m) {
  if (m == "PPA") return 0;
  if (m == "PDA") return 1;
  if (m == "FDA") return 2;
  return 3;
}

double one_decimal(double v) { return std::round(v * 10.0) / 10.0; }

std::string format_cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

std::vector<OdsReport> build_report(const MethodRuns& runs, const std::string& detector, const LabelMap& label_map,
                                    const std::vector<std::string>& targets, double min_confidence) {
  std::vector<std::string> methods;
  for (const auto& [m, _] : runs) methods.push_back(m);
  std::stable_sort(methods.begin(), methods.end(), [](const std::string& a, const std::string& b) {
    return method_rank(a) != method_rank(b) ? method_rank(a) < method_rank(b) : a < b;
  });

  std::vector<std::string> ids;
  if (!runs.empty()) {
    for (const auto& [id, _] : runs.begin()->second) ids.push_back(id);
  }
  for (const auto& [m, per_image] : runs) {
    std::vector<std::string> other;
    for (const auto& [id, _] : per_image) other.push_back(id);
    if (other != ids) fail(ErrorCode::InconsistentImageSets, "method " + m + " covers a different image set");
  }

  std::vector<OdsReport> reports;
  for (const auto& target : targets) {
    OdsReport r;
    r.detector = detector;
    r.target_label = target;
    r.methods = methods;
    r.image_ids = ids;
    for (const auto& m : methods) {
      std::vector<double> row;
      for (const auto& id : ids) row.push_back(one_decimal(compute_ods(runs.at(m).at(id), label_map, target, min_confidence)));
      r.cells.push_back(std::move(row));
    }
    r.column_max.assign(methods.size(), std::vector<bool>(ids.size(), false));
    for (std::size_t c = 0; c < ids.size(); ++c) {
      double best = 0.0;
      for (std::size_t m = 0; m < methods.size(); ++m) best = std::max(best, r.cells[m][c]);
      if (best <= 0.0) continue;
      for (std::size_t m = 0; m < methods.size(); ++m) r.column_max[m][c] = r.cells[m][c] == best;
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

double OdsReport::cell(std::string_view method, std::string_view image_id) const {
  const auto m = std::find(methods.begin(), methods.end(), method);
  const auto c = std::find(image_ids.begin(), image_ids.end(), image_id);
  if (m == methods.end() || c == image_ids.end()) fail(ErrorCode::UnknownImageId, "no cell for " + std::string(method) + "/" + std::string(image_id));
  return cells[static_cast<std::size_t>(m - methods.begin())][static_cast<std::size_t>(c - image_ids.begin())];
}

bool OdsReport::is_column_max(std::string_view method, std::string_view image_id) const {
  const auto m = std::find(methods.begin(), methods.end(), method);
  const auto c = std::find(image_ids.begin(), image_ids.end(), image_id);
  if (m == methods.end() || c == image_ids.end()) fail(ErrorCode::UnknownImageId, "no cell for " + std::string(method) + "/" + std::string(image_id));
  return column_max[static_cast<std::size_t>(m - methods.begin())][static_cast<std::size_t>(c - image_ids.begin())];
}

std::string to_csv(const std::vector<OdsReport>& reports) {
  std::ostringstream out;
  out << "target_label,method,image_id,ods\n";
  for (const auto& r : reports) {
    for (std::size_t m = 0; m < r.methods.size(); ++m) {
      for (std::size_t c = 0; c < r.image_ids.size(); ++c) {
        out << r.target_label << ',' << r.methods[m] << ',' << r.image_ids[c] << ',' << format_cell(r.cells[m][c]) << '\n';
      }
    }
  }
  return out.str();
}

std::string to_text(const OdsReport& r) {
  // Column maxima carry a trailing '*'.
  std::size_t width = 6;
  for (const auto& id : r.image_ids) width = std::max(width, id.size() + 1);
  std::size_t label_width = 6;
  for (const auto& m : r.methods) label_width = std::max(label_width, m.size() + 1);

  std::ostringstream out;
  out << r.detector << " / " << r.target_label << '\n';
  out << std::string(label_width, ' ');
  for (const auto& id : r.image_ids) out << std::string(width + 1 - id.size(), ' ') << id;
  out << '\n';
  for (std::size_t m = 0; m < r.methods.size(); ++m) {
    out << r.methods[m] << std::string(label_width - r.methods[m].size(), ' ');
    for (std::size_t c = 0; c < r.image_ids.size(); ++c) {
      const std::string v = format_cell(r.cells[m][c]) + (r.column_max[m][c] ? "*" : " ");
      out << std::string(width + 2 - std::min(width + 1, v.size()), ' ') << v;
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json runs_to_json(const MethodRuns& runs) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [m, per_image] : runs) {
    for (const auto& [id, list] : per_image) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& d : list) arr.push_back(to_json(d));
      j[m][id] = arr;
    }
  }
  return j;
}

MethodRuns runs_from_json(const nlohmann::json& j) {
  MethodRuns runs;
  try {
    for (const auto& [m, per_image] : j.items()) {
      for (const auto& [id, list] : per_image.items()) {
        auto& out = runs[m][id];
        for (const auto& d : list) out.push_back(detection_from_json(d));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("detection runs: ") + e.what());
  }
  return runs;
}

}  // namespace detaug
