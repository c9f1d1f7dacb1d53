#include "detaug/service.hpp"

#include "detaug/error.hpp"
#include "detaug/image_io.hpp"

#include <httplib.h>

#include <cstdio>
#include <random>

namespace detaug {

namespace {

class InFlightSlot {
 public:
  InFlightSlot(std::atomic<int>& counter, int limit) : counter_(counter) {
    acquired_ = counter_.fetch_add(1) < limit;
  }
  ~InFlightSlot() { counter_.fetch_sub(1); }
  InFlightSlot(const InFlightSlot&) = delete;
  InFlightSlot& operator=(const InFlightSlot&) = delete;
  bool acquired() const { return acquired_; }

 private:
  std::atomic<int>& counter_;
  bool acquired_ = false;
};

std::string correlation_id() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

HttpResponse json_response(int status, const nlohmann::json& body) {
  HttpResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

HttpResponse error_response(int status, std::string_view message, const std::string& cid) {
  auto r = json_response(status, {{"error", std::string(message)}, {"correlation_id", cid}});
  r.headers["X-Correlation-Id"] = cid;
  return r;
}

int mirror(int i, int n) {
  const int period = 2 * n;
  i %= period;
  return i < n ? i : period - 1 - i;
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

std::uint32_t be32(std::string_view b, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3]));
}

nlohmann::json describe(const PipelineBundle& b) {
  nlohmann::json stages = nlohmann::json::array();
  if (b.stage1) stages.push_back("stage1");
  stages.push_back("stage2");
  return {{"method", std::string(to_string(b.method))},
          {"input_size", b.stage2.generator_config.input_size},
          {"size_multiple", size_multiple(b)},
          {"configs_hash", b.configs_hash},
          {"dataset_hash", b.dataset_hash},
          {"seed", b.stage2.training_config.seed},
          {"stages", stages}};
}

}  // namespace

void ServiceConfig::validate() const {
  if (bundles.empty()) fail(ErrorCode::InvalidConfig, "service needs at least one bundle");
  if (port < 1 || port > 65535) fail(ErrorCode::InvalidConfig, "port out of range: " + std::to_string(port));
  if (max_dimension < 1) fail(ErrorCode::InvalidConfig, "max_dimension must be positive");
  if (max_in_flight < 1) fail(ErrorCode::InvalidConfig, "max_in_flight must be positive");
  if (request_timeout.count() <= 0) fail(ErrorCode::InvalidConfig, "request_timeout must be positive");
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::InvalidColor:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::DimensionMismatch:
      return 400;
    case ErrorCode::IncompleteBundle:
      return 404;
    default:
      return 500;
  }
}

AnnotationMap reflect_pad(const AnnotationMap& map, int width, int height) {
  if (width < map.width() || height < map.height()) fail(ErrorCode::ShapeMismatch, "pad target smaller than input");
  AnnotationMap out(width, height, kUnannotated);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(x, y) = map.at(mirror(x, map.width()), mirror(y, map.height()));
  }
  return out;
}

std::optional<std::pair<int, int>> png_dimensions(std::string_view bytes) {
  static constexpr std::string_view kSignature{"\x89PNG\r\n\x1a\n", 8};
  if (bytes.size() < 24 || bytes.substr(0, 8) != kSignature || bytes.substr(12, 4) != "IHDR") return std::nullopt;
  const auto w = be32(bytes, 16);
  const auto h = be32(bytes, 20);
  if (w == 0 || h == 0 || w > 1u << 30 || h > 1u << 30) return std::nullopt;
  return std::pair{static_cast<int>(w), static_cast<int>(h)};
}

InferenceService::InferenceService(std::map<Method, PipelineBundle> bundles, ServiceConfig config)
    : bundles_(std::move(bundles)), config_(std::move(config)) {
  if (bundles_.empty()) fail(ErrorCode::InvalidConfig, "service needs at least one bundle");
  const ClassPalette& first = bundles_.begin()->second.palette;
  for (const auto& [m, b] : bundles_) {
    if (b.method != m) fail(ErrorCode::InvalidConfig, "bundle registered as " + std::string(to_string(m)) + " holds " + std::string(to_string(b.method)));
    if (!(b.palette == first)) fail(ErrorCode::InvalidConfig, "bundles disagree on the class palette");
  }
}

InferenceService InferenceService::load(const ServiceConfig& config) {
  config.validate();
  std::map<Method, PipelineBundle> bundles;
  for (const auto& [m, path] : config.bundles) bundles.emplace(m, load_bundle(path));
  return InferenceService(std::move(bundles), config);
}

SynthesisResult InferenceService::synthesize(const SynthesisRequest& request) const {
  const auto start = std::chrono::steady_clock::now();
  const auto it = bundles_.find(request.method);
  if (it == bundles_.end()) fail(ErrorCode::IncompleteBundle, "no bundle loaded for method " + std::string(to_string(request.method)));
  const PipelineBundle& bundle = it->second;

  const auto dims = png_dimensions(request.png);
  if (!dims) fail(ErrorCode::ParseError, "payload is not a PNG");
  if (dims->first > config_.max_dimension || dims->second > config_.max_dimension) {
    fail(ErrorCode::QuotaExceeded, "image " + std::to_string(dims->first) + "x" + std::to_string(dims->second) +
                                       " exceeds the " + std::to_string(config_.max_dimension) + " pixel limit");
  }

  const auto* data = reinterpret_cast<const std::uint8_t*>(request.png.data());
  const RasterImage raster = decode_png({data, request.png.size()});
  const AnnotationMap ppa = decode_annotation(raster, bundle.palette, request.strict_palette);

  const int m = size_multiple(bundle);
  const int pw = round_up(ppa.width(), m);
  const int ph = round_up(ppa.height(), m);
  const RasterImage full = detaug::synthesize(bundle, pw == ppa.width() && ph == ppa.height() ? ppa : reflect_pad(ppa, pw, ph));

  RasterImage out(ppa.width(), ppa.height());
  for (int y = 0; y < ppa.height(); ++y) {
    for (int x = 0; x < ppa.width(); ++x) out.set_pixel(x, y, full.pixel(x, y));
  }
  const auto png = encode_png(out);

  SynthesisResult r;
  r.png.assign(png.begin(), png.end());
  r.method = request.method;
  r.width = ppa.width();
  r.height = ppa.height();
  r.padded_width = pw;
  r.padded_height = ph;
  r.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

nlohmann::json InferenceService::methods() const {
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json manifests = nlohmann::json::object();
  for (const auto& [m, b] : bundles_) {
    names.push_back(std::string(to_string(m)));
    manifests[std::string(to_string(m))] = describe(b);
  }
  return {{"methods", names}, {"bundles", manifests}, {"max_dimension", config_.max_dimension}};
}

nlohmann::json InferenceService::palette() const {
  const ClassPalette& p = bundles_.begin()->second.palette;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : p.entries()) entries.push_back({{"class_id", e.class_id}, {"class_name", e.class_name}, {"color", to_hex(e.color)}});
  entries.push_back({{"class_id", -1}, {"class_name", "unannotated"}, {"color", to_hex(p.sentinel())}});
  return {{"entries", entries}, {"sentinel", to_hex(p.sentinel())}};
}

HttpResponse InferenceService::handle(const HttpRequest& request) const {
  if (request.verb == "GET" && request.path == "/health") {
    HttpResponse r;
    r.content_type = "text/plain";
    r.body = "ok";
    return r;
  }
  if (request.verb == "GET" && request.path == "/methods") return json_response(200, methods());
  if (request.verb == "GET" && request.path == "/palette") return json_response(200, palette());
  if (request.verb == "POST" && request.path == "/synthesize") return handle_synthesize(request);
  return error_response(404, "no route for " + request.verb + " " + request.path, correlation_id());
}

HttpResponse InferenceService::handle_synthesize(const HttpRequest& request) const {
  const std::string cid = correlation_id();
  InFlightSlot slot(in_flight_, config_.max_in_flight);
  if (!slot.acquired()) return error_response(503, "too many requests in flight", cid);

  SynthesisRequest req;
  const auto method = request.params.find("method");
  if (method == request.params.end()) return error_response(400, "missing method parameter", cid);
  try {
    req.method = parse_method(method->second);
  } catch (const Error& e) {
    return error_response(400, e.what(), cid);
  }
  if (const auto strict = request.params.find("strict"); strict != request.params.end()) {
    req.strict_palette = !(strict->second == "0" || strict->second == "false");
  }
  req.png = request.upload ? *request.upload : request.body;

  try {
    const SynthesisResult result = synthesize(req);
    HttpResponse r;
    r.content_type = "image/png";
    r.body = result.png;
    char ms[32];
    std::snprintf(ms, sizeof(ms), "%.1f", result.duration_ms);
    r.headers["X-Duration-Ms"] = ms;
    r.headers["X-Correlation-Id"] = cid;
    r.headers["X-Method"] = std::string(to_string(result.method));
    if (result.padded_width != result.width || result.padded_height != result.height) {
      r.headers["X-Padded-Size"] = std::to_string(result.padded_width) + "x" + std::to_string(result.padded_height);
    }
    return r;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::QuotaExceeded) return error_response(413, e.what(), cid);
    const int status = status_for(e.code());
    if (status == 500) std::fprintf(stderr, "[%s] synthesize failed: %s\n", cid.c_str(), e.what());
    return error_response(status, status == 500 ? "internal error" : e.what(), cid);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[%s] synthesize failed: %s\n", cid.c_str(), e.what());
    return error_response(500, "internal error", cid);
  }
}

void InferenceService::mount(httplib::Server& server) const {
  const auto bridge = [this](const httplib::Request& in, httplib::Response& out) {
    HttpRequest req;
    req.verb = in.method;
    req.path = in.path;
    for (const auto& [k, v] : in.params) req.params.emplace(k, v);
    req.body = in.body;
    req.content_type = in.get_header_value("Content-Type");
    if (in.has_file("image")) req.upload = in.get_file_value("image").content;
    const HttpResponse r = handle(req);
    out.status = r.status;
    for (const auto& [k, v] : r.headers) out.set_header(k, v);
    out.set_content(r.body, r.content_type);
  };
  server.Get("/health", bridge);
  server.Get("/methods", bridge);
  server.Get("/palette", bridge);
  server.Post("/synthesize", bridge);
  server.set_payload_max_length(static_cast<std::size_t>(config_.max_dimension) * config_.max_dimension * 4 + (1 << 20));
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout).count();
  server.set_read_timeout(std::max<long long>(1, secs), 0);
  server.set_write_timeout(std::max<long long>(1, secs), 0);
}

void InferenceService::serve() {
  server_ = std::make_shared<httplib::Server>();
  mount(*server_);
  if (!server_->listen(config_.host, config_.port)) {
    fail(ErrorCode::NetworkError, "cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  }
}

void InferenceService::stop() {
  if (server_) server_->stop();
}

}  // namespace detaug
