#include "detaug/error.hpp"
#include "detaug/evaluate.hpp"
#include "detaug/hashing.hpp"
#include "detaug/image_io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <httplib.h>

namespace detaug {

namespace fs = std::filesystem;

nlohmann::json to_json(const Detection& d) {
  nlohmann::json j = {{"label", d.label}, {"confidence", d.confidence}};
  if (d.box) j["box"] = {d.box->x, d.box->y, d.box->w, d.box->h};
  return j;
}

Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  d.label = j.at("label").get<std::string>();
  d.confidence = j.at("confidence").get<double>();
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
    fail(ErrorCode::ParseError, "confidence " + std::to_string(d.confidence) + " outside [0,1]");
  }
  if (j.contains("box")) {
    const auto& b = j.at("box");
    d.box = BoundingBox{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
  }
  return d;
}

// ------------------------------------------------------------------ mock

MockDetector::MockDetector(std::map<std::string, std::vector<Detection>> table, std::string name)
    : table_(table.begin(), table.end()), name_(std::move(name)) {}

MockDetector MockDetector::from_json(const nlohmann::json& j) {
  std::map<std::string, std::vector<Detection>> table;
  try {
    for (const auto& [id, list] : j.at("images").items()) {
      auto& out = table[id];
      for (const auto& d : list) out.push_back(detection_from_json(d));
    }
    return MockDetector(std::move(table), j.value("name", "mock"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("mock detector config: ") + e.what());
  }
}

std::vector<Detection> MockDetector::detect(std::string_view image_id, const RasterImage&) {
  const auto it = table_.find(image_id);
  if (it == table_.end()) fail(ErrorCode::UnknownImageId, "mock detector has no entry for '" + std::string(image_id) + "'");
  return it->second;
}

// ---------------------------------------------------------- token bucket

TokenBucket::TokenBucket(double rate, double burst)
    : rate_(rate), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)), last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0) return;
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

// ----------------------------------------------------------------- cloud

ProviderConfig ProviderConfig::from_json(const nlohmann::json& j) {
  ProviderConfig c;
  try {
    c.name = j.value("name", c.name);
    c.endpoint = j.at("endpoint").get<std::string>();
    c.credential_env = j.value("credential_env", c.credential_env);
    c.auth_header = j.value("auth_header", c.auth_header);
    c.auth_prefix = j.value("auth_prefix", c.auth_prefix);
    c.json_body = j.value("json_body", c.json_body);
    c.image_field = j.value("image_field", c.image_field);
    c.labels_pointer = j.value("labels_pointer", c.labels_pointer);
    c.label_field = j.value("label_field", c.label_field);
    c.confidence_field = j.value("confidence_field", c.confidence_field);
    c.confidence_scale = j.value("confidence_scale", c.confidence_scale);
    c.cache_dir = j.value("cache_dir", c.cache_dir.string());
    c.max_retries = j.value("max_retries", c.max_retries);
    c.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 200));
    c.timeout = std::chrono::seconds(j.value("timeout_s", 30));
    c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("provider config: ") + e.what());
  }
  return c;
}

double parse_confidence(const nlohmann::json& value, double scale) {
  double v = 0;
  if (value.is_number()) {
    v = value.get<double>() / scale;
  } else if (value.is_string()) {
    std::string text = value.get<std::string>();
    const bool percent = !text.empty() && text.back() == '%';
    if (percent) text.pop_back();
    std::size_t used = 0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      fail(ErrorCode::ParseError, "bad confidence '" + value.get<std::string>() + "'");
    }
    if (used != text.size()) fail(ErrorCode::ParseError, "bad confidence '" + value.get<std::string>() + "'");
    v /= percent ? 100.0 : scale;
  } else {
    fail(ErrorCode::ParseError, "confidence is neither number nor string");
  }
  if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::ParseError, "confidence " + std::to_string(v) + " outside [0,1]");
  return v;
}

CloudDetector::CloudDetector(ProviderConfig config)
    : config_(std::move(config)), bucket_(config_.requests_per_second, config_.requests_per_second) {}

fs::path CloudDetector::cache_path(const RasterImage& image) const {
  return config_.cache_dir / config_.name / (sha256_hex(encode_png(image)) + ".json");
}

std::vector<Detection> CloudDetector::parse(const std::string& payload) const {
  std::vector<Detection> out;
  try {
    const auto j = nlohmann::json::parse(payload);
    const auto ptr = nlohmann::json::json_pointer(config_.labels_pointer);
    if (!j.contains(ptr)) return out;  // providers omit the array when nothing is found
    for (const auto& item : j.at(ptr)) {
      Detection d;
      d.label = item.at(config_.label_field).get<std::string>();
      d.confidence = parse_confidence(item.at(config_.confidence_field), config_.confidence_scale);
      out.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("provider payload: ") + e.what());
  }
  return out;
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::InvalidConfig, "endpoint '" + url + "' has no scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string base64(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace

std::string CloudDetector::fetch(const std::vector<std::uint8_t>& png) {
  httplib::Headers headers;
  if (!config_.credential_env.empty()) {
    const char* token = std::getenv(config_.credential_env.c_str());
    if (!token || !*token) fail(ErrorCode::AuthError, "credential variable " + config_.credential_env + " is not set");
    headers.emplace(config_.auth_header, config_.auth_prefix + token);
  }
  std::string body;
  std::string content_type;
  if (config_.json_body) {
    body = nlohmann::json{{config_.image_field, base64(png)}}.dump();
    content_type = "application/json";
  } else {
    body.assign(png.begin(), png.end());
    content_type = "image/png";
  }

  const Url url = split_url(config_.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    bucket_.acquire();
    ++network_calls_;
    const auto res = client.Post(url.path, headers, body, content_type);
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      fail(ErrorCode::AuthError, config_.name + " rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 429) fail(ErrorCode::QuotaExceeded, config_.name + " quota exceeded (HTTP 429)");
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      fail(ErrorCode::NetworkError, config_.name + " returned HTTP " + std::to_string(res->status));
    }
    return res->body;
  }
  fail(ErrorCode::NetworkError, config_.name + " unreachable after " + std::to_string(config_.max_retries) +
                                    " retries: " + last_error);
}

std::vector<Detection> CloudDetector::detect(std::string_view, const RasterImage& image) {
  const std::vector<std::uint8_t> png = encode_png(image);
  const fs::path cached = config_.cache_dir / config_.name / (sha256_hex(png) + ".json");
  if (fs::exists(cached)) {
    std::ifstream in(cached);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }
  const std::string payload = fetch(png);
  std::vector<Detection> detections = parse(payload);  // only well-formed payloads enter the cache
  fs::create_directories(cached.parent_path());
  const fs::path tmp = cached.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  std::ofstream(tmp) << payload;
  fs::rename(tmp, cached);
  return detections;
}

// ---------------------------------------------------------------- fan-out

std::map<std::string, std::vector<Detection>> detect_all(
    DetectorBackend& backend, const std::vector<std::pair<std::string, RasterImage>>& images, int parallelism) {
  std::vector<std::vector<Detection>> results(images.size());
  std::vector<std::exception_ptr> errors(images.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      try {
        results[i] = backend.detect(images[i].first, images[i].second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(parallelism, 1, static_cast<int>(std::max<std::size_t>(1, images.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  std::map<std::string, std::vector<Detection>> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out[images[i].first] = std::move(results[i]);
  }
  return out;
}

}  // namespace detaug
