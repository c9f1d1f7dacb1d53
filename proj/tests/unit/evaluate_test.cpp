#include "support/oracles.hpp"

#include "detaug/error.hpp"
#include "detaug/evaluate.hpp"

#include <doctest.h>
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

using namespace detaug;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

// Local stand-in for a label-detection endpoint.
class FakeProvider {
 public:
  std::atomic<int> hits{0};
  std::atomic<int> failures_left{0};
  std::atomic<int> status{200};
  std::string last_auth;
  std::string last_body;

  FakeProvider() {
    server_.Post("/detect", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_auth = req.get_header_value("Authorization");
      last_body = req.body;
      if (failures_left > 0) {
        --failures_left;
        res.status = 503;
        return;
      }
      res.status = status;
      res.set_content(R"({"labels":[{"name":"Aeroplane","confidence":"90.0%"},{"name":"Sky","confidence":"75%"}]})",
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }

  ProviderConfig config(const fs::path& cache) const {
    ProviderConfig c;
    c.name = "fake";
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/detect";
    c.cache_dir = cache;
    c.initial_backoff = std::chrono::milliseconds(1);
    c.requests_per_second = 1000;
    return c;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RasterImage image(std::uint8_t v) { return RasterImage(8, 8, {v, v, v}); }

}  // namespace

TEST_CASE("mock detector") {
  MockDetector m({{"imgA", {{"Airplane", 0.9, std::nullopt}}}, {"empty", {}}});
  const auto got = m.detect("imgA", image(0));
  REQUIRE(got.size() == 1);
  CHECK(got[0].label == "Airplane");
  CHECK(got[0].confidence == 0.9);
  CHECK(m.detect("empty", image(0)).empty());
  CHECK(code_of([&] { m.detect("imgB", image(0)); }) == ErrorCode::UnknownImageId);

  const auto j = nlohmann::json::parse(R"({"name":"m2","images":{"x":[{"label":"Car","confidence":0.4,"box":[1,2,3,4]}]}})");
  MockDetector from = MockDetector::from_json(j);
  CHECK(from.name() == "m2");
  const auto d = from.detect("x", image(0));
  REQUIRE(d[0].box.has_value());
  CHECK(d[0].box->w == 3);
  CHECK(code_of([] { MockDetector::from_json(nlohmann::json::parse(R"({"images":{"x":[{"label":"Car","confidence":1.5}]}})")); }) ==
        ErrorCode::ParseError);
}

TEST_CASE("confidence parsing") {
  CHECK(parse_confidence("90.0%", 1.0) == doctest::Approx(0.90));
  CHECK(parse_confidence("0.9", 1.0) == doctest::Approx(0.9));
  CHECK(parse_confidence(0.25, 1.0) == 0.25);
  CHECK(parse_confidence(57, 100.0) == doctest::Approx(0.57));
  CHECK(code_of([] { parse_confidence("high", 1.0); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_confidence(1.2, 1.0); }) == ErrorCode::ParseError);
}

TEST_CASE("cloud detector against a local provider") {
  FakeProvider provider;
  testing::TempDir tmp;
  ::setenv("DETAUG_TEST_TOKEN", "secret-token", 1);
  ProviderConfig cfg = provider.config(tmp.path());
  cfg.credential_env = "DETAUG_TEST_TOKEN";
  CloudDetector cloud(cfg);

  const auto first = cloud.detect("A", image(10));
  REQUIRE(first.size() == 2);
  CHECK(first[0].label == "Aeroplane");
  CHECK(first[0].confidence == doctest::Approx(0.90));
  CHECK(provider.last_auth == "Bearer secret-token");
  CHECK(nlohmann::json::parse(provider.last_body).contains("image"));
  CHECK(cloud.network_calls() == 1);
  CHECK(fs::exists(cloud.cache_path(image(10))));
  CHECK(cloud.cache_path(image(10)).parent_path() == tmp.path() / "fake");

  // Cached: a fresh detector makes no calls and returns the same detections.
  CloudDetector again(cfg);
  const auto second = again.detect("A", image(10));
  CHECK(again.network_calls() == 0);
  CHECK(provider.hits == 1);
  REQUIRE(second.size() == first.size());
  CHECK(second[1].confidence == first[1].confidence);

  SUBCASE("retries 5xx with backoff") {
    provider.failures_left = 2;
    CHECK(cloud.detect("B", image(20)).size() == 2);
    CHECK(cloud.network_calls() == 4);
  }
  SUBCASE("gives up after the retry budget") {
    provider.failures_left = 100;
    CHECK(code_of([&] { cloud.detect("B", image(30)); }) == ErrorCode::NetworkError);
    CHECK(cloud.network_calls() == 1 + 4);
    CHECK_FALSE(fs::exists(cloud.cache_path(image(30))));
  }
  SUBCASE("401 is an auth error") {
    provider.status = 401;
    CHECK(code_of([&] { cloud.detect("B", image(40)); }) == ErrorCode::AuthError);
  }
  SUBCASE("429 is a quota error") {
    provider.status = 429;
    CHECK(code_of([&] { cloud.detect("B", image(50)); }) == ErrorCode::QuotaExceeded);
  }
  SUBCASE("missing credential") {
    ProviderConfig c = cfg;
    c.credential_env = "DETAUG_TEST_TOKEN_UNSET";
    CloudDetector nocred(c);
    CHECK(code_of([&] { nocred.detect("B", image(60)); }) == ErrorCode::AuthError);
  }
  SUBCASE("unreachable endpoint") {
    ProviderConfig c = cfg;
    c.endpoint = "http://127.0.0.1:1/detect";
    c.max_retries = 1;
    CloudDetector dead(c);
    CHECK(code_of([&] { dead.detect("B", image(70)); }) == ErrorCode::NetworkError);
    CHECK(dead.network_calls() == 2);
  }
  SUBCASE("malformed payloads are not cached") {
    CHECK(cloud.parse("{\"other\":1}").empty());
    CHECK(code_of([&] { cloud.parse(R"({"labels":[{"name":1,"confidence":0.5}]})"); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { cloud.parse("not json"); }) == ErrorCode::ParseError);
  }
}

TEST_CASE("detect_all runs in parallel and keeps ids") {
  FakeProvider provider;
  testing::TempDir tmp;
  CloudDetector cloud(provider.config(tmp.path()));
  std::vector<std::pair<std::string, RasterImage>> images;
  for (int i = 0; i < 6; ++i) images.emplace_back("img" + std::to_string(i), image(static_cast<std::uint8_t>(100 + i)));
  const auto out = detect_all(cloud, images, 3);
  CHECK(out.size() == 6);
  CHECK(out.at("img4").size() == 2);
  CHECK(cloud.network_calls() == 6);
  detect_all(cloud, images, 3);
  CHECK(cloud.network_calls() == 6);
}

TEST_CASE("provider config parsing") {
  const auto c = ProviderConfig::from_json(nlohmann::json::parse(
      R"({"name":"rek","endpoint":"https://example.invalid/v1/labels","credential_env":"TOKEN","confidence_scale":100,"max_retries":5})"));
  CHECK(c.name == "rek");
  CHECK(c.confidence_scale == 100);
  CHECK(c.max_retries == 5);
  CHECK(code_of([] { ProviderConfig::from_json(nlohmann::json::object()); }) == ErrorCode::ParseError);
}

TEST_CASE("label map and ods") {
  const LabelMap m = LabelMap::airport_default();
  CHECK(m.map("Aerospace Manufacturer") == "Building");
  CHECK(m.map("Airplane") == "Airplane");
  CHECK_FALSE(m.map("Sky").has_value());
  CHECK(code_of([] { LabelMap({{"x", "Boat"}}, {"Airplane"}); }) == ErrorCode::UnknownTargetLabel);

  CHECK(compute_ods({{"Aeroplane", 0.57, std::nullopt}}, m, "Airplane") == doctest::Approx(57.0));
  CHECK(compute_ods({}, m, "Building") == 0.0);
  CHECK(compute_ods({{"Jet", 0.6, std::nullopt}, {"Aeroplane", 0.8, std::nullopt}}, m, "Airplane") == doctest::Approx(80.0));
  CHECK(compute_ods({{"Sky", 0.99, std::nullopt}}, m, "Airplane") == 0.0);
  CHECK(compute_ods({{"Car", 0.4, std::nullopt}}, m, "Vehicle", 0.5) == 0.0);
  CHECK(code_of([&] { compute_ods({}, m, "Boat"); }) == ErrorCode::UnknownTargetLabel);

  const LabelMap custom = LabelMap::from_json(nlohmann::json::parse(R"({"targets":["Ship"],"mapping":{"Boat":"Ship"}})"));
  CHECK(compute_ods({{"Boat", 0.3, std::nullopt}}, custom, "Ship") == doctest::Approx(30.0));
}

TEST_CASE("build_report") {
  const LabelMap m = LabelMap::airport_default();
  MethodRuns runs;
  runs["FDA"]["A"] = {{"Jet", 0.9, std::nullopt}};
  runs["PPA"]["A"] = {{"Aeroplane", 0.5, std::nullopt}, {"Car", 0.7, std::nullopt}};
  runs["PDA"]["A"] = {};
  runs["FDA"]["B"] = {};
  runs["PPA"]["B"] = {};
  runs["PDA"]["B"] = {};
  const auto reports = build_report(runs, "mock", m, {"Airplane", "Building"});
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].methods == std::vector<std::string>{"PPA", "PDA", "FDA"});
  CHECK(reports[0].cell("FDA", "A") == 90.0);
  CHECK(reports[0].is_column_max("FDA", "A"));
  CHECK_FALSE(reports[0].is_column_max("PPA", "A"));
  CHECK_FALSE(reports[0].is_column_max("PPA", "B"));
  for (const auto& row : reports[1].cells) {
    for (double v : row) CHECK(v == 0.0);
  }

  // Order of detections within a list does not matter.
  MethodRuns shuffled = runs;
  std::reverse(shuffled["PPA"]["A"].begin(), shuffled["PPA"]["A"].end());
  CHECK(to_csv(build_report(shuffled, "mock", m, {"Airplane", "Building"})) == to_csv(reports));

  const std::string csv = to_csv(reports);
  CHECK(csv.rfind("target_label,method,image_id,ods\nAirplane,PPA,A,50.0\n", 0) == 0);
  const std::string text = to_text(reports[0]);
  CHECK(text.find("90.0*") != std::string::npos);
  CHECK(text.find("mock / Airplane") != std::string::npos);

  CHECK(runs_from_json(runs_to_json(runs)).at("PPA").at("A").size() == 2);

  runs["PDA"].erase("B");
  CHECK(code_of([&] { build_report(runs, "mock", m, {"Airplane"}); }) == ErrorCode::InconsistentImageSets);
}

TEST_CASE("table fixtures round trip through the report") {
  const LabelMap m = LabelMap::airport_default();
  for (const char* name : {"google_vision", "rekognition"}) {
    std::ifstream runs_in(testing::data_dir() / "tables" / (std::string(name) + "_runs.json"));
    std::ifstream cells_in(testing::data_dir() / "tables" / (std::string(name) + "_cells.json"));
    const auto reports = build_report(runs_from_json(nlohmann::json::parse(runs_in)), name, m, m.targets());
    const auto cells = nlohmann::json::parse(cells_in);
    CHECK(cells.size() == 48);
    for (const auto& c : cells) {
      const auto r = std::find_if(reports.begin(), reports.end(), [&](const OdsReport& x) { return x.target_label == c["target_label"]; });
      REQUIRE(r != reports.end());
      CHECK(r->cell(c["method"].get<std::string>(), c["image_id"].get<std::string>()) == c["ods"].get<double>());
    }
  }
}
