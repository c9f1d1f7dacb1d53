#pragma once

#include "detaug/error.hpp"
#include "detaug/pipelines.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace detaug {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::map<Method, std::filesystem::path> bundles;
  int max_dimension = 1024;
  std::chrono::milliseconds request_timeout{30000};
  int max_in_flight = 4;

  // InvalidConfig: no bundles, port outside 1..65535, non-positive limits.
  void validate() const;
};

struct SynthesisRequest {
  Method method = Method::Pda;
  std::string png;
  bool strict_palette = true;
};

struct SynthesisResult {
  std::string png;
  Method method = Method::Pda;
  double duration_ms = 0.0;
  int width = 0;
  int height = 0;
  int padded_width = 0;
  int padded_height = 0;
};

// Transport-neutral request/response so routes can be exercised without a socket.
struct HttpRequest {
  std::string verb;
  std::string path;
  std::map<std::string, std::string> params;
  std::string body;
  std::string content_type;
  std::optional<std::string> upload;  // multipart field "image"
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

class InferenceService {
 public:
  InferenceService(std::map<Method, PipelineBundle> bundles, ServiceConfig config);
  static InferenceService load(const ServiceConfig& config);

  // Throws Error; see status_for() for the HTTP mapping.
  SynthesisResult synthesize(const SynthesisRequest& request) const;

  nlohmann::json methods() const;
  nlohmann::json palette() const;

  HttpResponse handle(const HttpRequest& request) const;

  void mount(httplib::Server& server) const;
  // Blocks until stop() or a fatal listen error.
  void serve();
  void stop();

  const ServiceConfig& config() const noexcept { return config_; }

 private:
  HttpResponse handle_synthesize(const HttpRequest& request) const;

  std::map<Method, PipelineBundle> bundles_;
  ServiceConfig config_;
  mutable std::atomic<int> in_flight_{0};
  std::shared_ptr<httplib::Server> server_;
};

int status_for(ErrorCode code);

// Symmetric mirror padding (abc -> abccba) on the right and bottom edges.
AnnotationMap reflect_pad(const AnnotationMap& map, int width, int height);

// Width and height from a PNG IHDR without decoding pixels.
std::optional<std::pair<int, int>> png_dimensions(std::string_view bytes);

}  // namespace detaug
