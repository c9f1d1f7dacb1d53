#pragma once

#include "detaug/raster.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace detaug {

struct BoundingBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;
};

struct Detection {
  std::string label;
  double confidence = 0;  // [0, 1]
  std::optional<BoundingBox> box;
};

nlohmann::json to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual std::string name() const = 0;
  // Must not modify the image; implementations are safe to call concurrently.
  virtual std::vector<Detection> detect(std::string_view image_id, const RasterImage& image) = 0;
};

// Returns configured detections per image id verbatim.
class MockDetector final : public DetectorBackend {
 public:
  explicit MockDetector(std::map<std::string, std::vector<Detection>> table, std::string name = "mock");
  static MockDetector from_json(const nlohmann::json& j);

  std::string name() const override { return name_; }
  std::vector<Detection> detect(std::string_view image_id, const RasterImage& image) override;

 private:
  std::map<std::string, std::vector<Detection>, std::less<>> table_;
  std::string name_;
};

// Blocking token bucket: `rate` tokens per second, up to `burst` stored.
class TokenBucket {
 public:
  TokenBucket(double rate, double burst);
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

// Generic JSON-over-HTTP label detection endpoint.
struct ProviderConfig {
  std::string name = "cloud";
  std::string endpoint;             // http(s)://host[:port]/path
  std::string credential_env;       // env var holding the token; empty = no auth
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  bool json_body = true;            // {"<image_field>": base64 PNG}; otherwise raw image/png
  std::string image_field = "image";
  std::string labels_pointer = "/labels";  // JSON pointer to the label array
  std::string label_field = "name";
  std::string confidence_field = "confidence";
  double confidence_scale = 1.0;    // 100 when the provider reports percentages
  std::filesystem::path cache_dir = "cache";
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{30};
  double requests_per_second = 5.0;

  static ProviderConfig from_json(const nlohmann::json& j);
};

// Posts each image to the provider, caching raw payloads at
// <cache_dir>/<name>/<sha256-of-png>.json so reruns need no network.
class CloudDetector final : public DetectorBackend {
 public:
  explicit CloudDetector(ProviderConfig config);

  std::string name() const override { return config_.name; }
  std::vector<Detection> detect(std::string_view image_id, const RasterImage& image) override;

  std::filesystem::path cache_path(const RasterImage& image) const;
  int network_calls() const { return network_calls_.load(); }

  // Label array of a provider payload as Detections.
  std::vector<Detection> parse(const std::string& payload) const;

 private:
  std::string fetch(const std::vector<std::uint8_t>& png);

  ProviderConfig config_;
  TokenBucket bucket_;
  std::atomic<int> network_calls_{0};
};

// Parses "90.0%", "0.9", 0.9, or 90 (with scale 100) into [0, 1].
double parse_confidence(const nlohmann::json& value, double scale);

// Runs `backend` over images with up to `parallelism` concurrent calls.
std::map<std::string, std::vector<Detection>> detect_all(
    DetectorBackend& backend, const std::vector<std::pair<std::string, RasterImage>>& images, int parallelism = 1);

// Raw detector label -> target label. Target names map to themselves.
class LabelMap {
 public:
  LabelMap(std::map<std::string, std::string> mapping, std::vector<std::string> targets);
  static LabelMap from_json(const nlohmann::json& j);
  // Airplane, Aircraft, Building, Vehicle with common raw-label aliases.
  static LabelMap airport_default();

  std::optional<std::string> map(std::string_view raw) const;
  const std::vector<std::string>& targets() const { return targets_; }
  bool is_target(std::string_view label) const;

 private:
  std::map<std::string, std::string, std::less<>> mapping_;
  std::vector<std::string> targets_;
};

// 100 x max confidence over detections mapping to `target` (0 when none).
// Detections below min_confidence are ignored.
double compute_ods(const std::vector<Detection>& detections, const LabelMap& label_map, std::string_view target,
                   double min_confidence = 0.0);

using MethodRuns = std::map<std::string, std::map<std::string, std::vector<Detection>>>;

struct OdsReport {
  std::string detector;
  std::string target_label;
  std::vector<std::string> methods;    // row order
  std::vector<std::string> image_ids;  // column order
  std::vector<std::vector<double>> cells;     // [row][column], percent, one decimal
  std::vector<std::vector<bool>> column_max;  // mirrors the bold cells; none in all-zero columns

  double cell(std::string_view method, std::string_view image_id) const;
  bool is_column_max(std::string_view method, std::string_view image_id) const;
};

// Rows ordered PPA, PDA, FDA (then any other method names alphabetically).
std::vector<OdsReport> build_report(const MethodRuns& runs, const std::string& detector, const LabelMap& label_map,
                                    const std::vector<std::string>& targets, double min_confidence = 0.0);

// `target_label,method,image_id,ods` with ods to one decimal.
std::string to_csv(const std::vector<OdsReport>& reports);
std::string to_text(const OdsReport& report);

nlohmann::json runs_to_json(const MethodRuns& runs);
MethodRuns runs_from_json(const nlohmann::json& j);

}  // namespace detaug
