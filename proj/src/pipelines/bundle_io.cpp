#include "detaug/error.hpp"
#include "detaug/pipelines.hpp"

#include <fstream>

namespace detaug {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path, ErrorCode missing) {
  std::ifstream in(path);
  if (!in) fail(missing, "missing " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path stage_dir(Method method, int stage) {
  return fs::path(std::string(to_string(method))) / ("stage" + std::to_string(stage));
}

void save_stage(const fs::path& root, Method method, int stage, const TrainedModel& model) {
  const fs::path dir = root / stage_dir(method, stage);
  fs::create_directories(dir);
  const std::string name = std::to_string(model.steps_run) + ".ckpt";
  save_checkpoint(dir / name, model);
  write_loss_csv(dir / "loss.csv", model.loss_history);
  std::ofstream(dir / "latest") << name << '\n';
}

std::optional<TrainedModel> load_stage(const fs::path& root, Method method, int stage) {
  const fs::path dir = root / stage_dir(method, stage);
  std::ifstream pointer(dir / "latest");
  if (!pointer) return std::nullopt;
  std::string name;
  std::getline(pointer, name);
  if (name.empty() || !fs::exists(dir / name)) return std::nullopt;
  return load_checkpoint(dir / name);
}

}  // namespace

nlohmann::json read_manifest(const fs::path& dir) {
  return read_json(dir / "manifest.json", ErrorCode::IncompleteBundle);
}

void save_bundle(const fs::path& dir, const PipelineBundle& bundle) {
  fs::create_directories(dir);
  bundle.palette.save(dir / "palette.json");
  bundle.converted.save(dir / "converted_palette.json");

  nlohmann::json params = nlohmann::json::object();
  if (const auto* c = std::get_if<CannyParams>(&bundle.preprocess)) {
    params = {{"kind", "canny"}, {"gaussian_sigma", c->gaussian_sigma},
              {"low_threshold", c->low_threshold}, {"high_threshold", c->high_threshold}};
  } else if (const auto* s = std::get_if<SegmentationParams>(&bundle.preprocess)) {
    params = {{"kind", "segmentation"}, {"scale", s->scale}, {"min_region_size", s->min_region_size}};
  } else {
    params = {{"kind", "none"}};
  }
  write_json(dir / "params.json", params);

  nlohmann::json stages = nlohmann::json::object();
  if (bundle.stage1) {
    save_stage(dir, bundle.method, 1, *bundle.stage1);
    stages["stage1"] = (stage_dir(bundle.method, 1) / (std::to_string(bundle.stage1->steps_run) + ".ckpt")).generic_string();
  }
  save_stage(dir, bundle.method, 2, bundle.stage2);
  stages["stage2"] = (stage_dir(bundle.method, 2) / (std::to_string(bundle.stage2.steps_run) + ".ckpt")).generic_string();

  write_json(dir / "manifest.json", {{"method", std::string(to_string(bundle.method))},
                                     {"configs_hash", bundle.configs_hash},
                                     {"dataset_hash", bundle.dataset_hash},
                                     {"seed", bundle.stage2.training_config.seed},
                                     {"input_size", bundle.stage2.generator_config.input_size},
                                     {"size_multiple", size_multiple(bundle)},
                                     {"stages", stages}});
}

PipelineBundle load_bundle(const fs::path& dir) {
  const nlohmann::json manifest = read_manifest(dir);
  Method method;
  try {
    method = parse_method(manifest.at("method").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IncompleteBundle, "manifest: " + std::string(e.what()));
  }
  PipelineBundle bundle(ClassPalette::load(dir / "palette.json"));
  bundle.method = method;
  bundle.configs_hash = manifest.value("configs_hash", "");
  bundle.dataset_hash = manifest.value("dataset_hash", "");

  const nlohmann::json params = read_json(dir / "params.json", ErrorCode::IncompleteBundle);
  const std::string kind = params.value("kind", "none");
  if (kind == "canny") {
    bundle.preprocess = CannyParams{params.at("gaussian_sigma").get<double>(), params.at("low_threshold").get<int>(),
                                    params.at("high_threshold").get<int>()};
  } else if (kind == "segmentation") {
    bundle.preprocess = SegmentationParams{params.at("scale").get<double>(), params.at("min_region_size").get<int>()};
  }

  auto stage2 = load_stage(dir, method, 2);
  if (!stage2) fail(ErrorCode::IncompleteBundle, std::string(to_string(method)) + " bundle is missing stage 2");
  bundle.stage2 = std::move(*stage2);
  if (method != Method::PpaBaseline) {
    bundle.stage1 = load_stage(dir, method, 1);
    if (!bundle.stage1) fail(ErrorCode::IncompleteBundle, std::string(to_string(method)) + " bundle is missing stage 1");
  }
  return bundle;
}

}  // namespace detaug
