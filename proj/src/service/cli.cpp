#include "detaug/cli.hpp"

#include "detaug/detail_cache.hpp"
#include "detaug/error.hpp"
#include "detaug/evaluate.hpp"
#include "detaug/image_io.hpp"
#include "detaug/service.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace detaug {

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
void read_opt(const pt::ptree& tree, const char* key, T& into) {
  if (const auto v = tree.get_optional<T>(key)) into = *v;
}

void apply_stage_value(PipelineConfig& c, auto&& fn) {
  fn(c.stage1);
  fn(c.stage2);
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::vector<PairedSample> training_samples(const CliSettings& s, const ClassPalette& palette, std::ostream& out) {
  DatasetLoad load = load_dataset(s.data_root, s.split, palette);
  if (!load.unmatched.empty()) out << "skipping " << load.unmatched.size() << " unpaired files\n";
  if (s.ppa_drop_fraction > 0.0) {
    for (auto& sample : load.samples) {
      sample.annotation = simulate_ppa(sample.annotation, DropFraction{s.ppa_drop_fraction, s.ppa_seed}, palette);
    }
  }
  return std::move(load.samples);
}

InferenceService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

CliSettings CliSettings::load(const fs::path& ini) {
  pt::ptree tree;
  try {
    pt::read_ini(ini.string(), tree);
  } catch (const pt::ptree_error& e) {
    fail(ErrorCode::InvalidConfig, std::string(e.what()));
  }
  const fs::path base = ini.parent_path();
  CliSettings s;
  try {
    if (const auto v = tree.get_optional<std::string>("data.root")) s.data_root = resolve(base, *v);
    if (const auto v = tree.get_optional<std::string>("data.split")) s.split = parse_split(*v);
    if (const auto v = tree.get_optional<std::string>("data.palette")) s.palette = resolve(base, *v);
    read_opt(tree, "data.ppa_drop_fraction", s.ppa_drop_fraction);
    read_opt(tree, "data.ppa_seed", s.ppa_seed);

    int input_size = tree.get<int>("pipeline.input_size", 64);
    s.pipeline = PipelineConfig::toy(input_size);
    PipelineConfig& p = s.pipeline;
    if (const auto v = tree.get_optional<int>("pipeline.depth")) {
      apply_stage_value(p, [&](StageConfig& st) {
        st.generator.depth = *v;
        st.generator.dropout_levels = GeneratorConfig::default_dropout_levels(*v);
      });
    }
    if (const auto v = tree.get_optional<int>("pipeline.base_channels")) apply_stage_value(p, [&](StageConfig& st) { st.generator.base_channels = *v; });
    if (const auto v = tree.get_optional<int>("pipeline.d_layers")) apply_stage_value(p, [&](StageConfig& st) { st.discriminator.layers = *v; });
    if (const auto v = tree.get_optional<int>("pipeline.d_base_channels")) apply_stage_value(p, [&](StageConfig& st) { st.discriminator.base_channels = *v; });
    if (const auto v = tree.get_optional<int>("pipeline.steps")) apply_stage_value(p, [&](StageConfig& st) { st.training.steps = *v; });
    if (const auto v = tree.get_optional<int>("pipeline.batch_size")) apply_stage_value(p, [&](StageConfig& st) { st.training.batch_size = *v; });
    if (const auto v = tree.get_optional<double>("pipeline.learning_rate")) apply_stage_value(p, [&](StageConfig& st) { st.training.learning_rate = *v; });
    if (const auto v = tree.get_optional<double>("pipeline.l1_weight")) apply_stage_value(p, [&](StageConfig& st) { st.training.l1_weight = *v; });
    read_opt(tree, "pipeline.stage1_seed", p.stage1.training.seed);
    read_opt(tree, "pipeline.stage2_seed", p.stage2.training.seed);
    read_opt(tree, "pipeline.ground_truth_detail", p.ground_truth_detail);
    read_opt(tree, "canny.sigma", p.canny.gaussian_sigma);
    read_opt(tree, "canny.low", p.canny.low_threshold);
    read_opt(tree, "canny.high", p.canny.high_threshold);
    read_opt(tree, "segmentation.scale", p.segmentation.scale);
    read_opt(tree, "segmentation.min_region_size", p.segmentation.min_region_size);

    if (const auto v = tree.get_optional<std::string>("output.bundles")) s.bundles = resolve(base, *v);
    read_opt(tree, "service.host", s.host);
    read_opt(tree, "service.port", s.port);
    read_opt(tree, "service.max_dimension", s.max_dimension);
    read_opt(tree, "service.max_in_flight", s.max_in_flight);
    read_opt(tree, "service.timeout_ms", s.timeout_ms);
  } catch (const pt::ptree_error& e) {
    fail(ErrorCode::InvalidConfig, ini.string() + ": " + e.what());
  }
  return s;
}

ClassPalette CliSettings::load_palette() const {
  return palette ? ClassPalette::load(*palette) : ClassPalette::isaid_default();
}

fs::path CliSettings::cache_root() const {
  if (const char* env = std::getenv("DETAUG_CACHE_DIR"); env && *env) return env;
  return data_root;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detail-aware synthetic imagery from partial annotations", "detaug"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "INI settings file")->check(CLI::ExistingFile);
  std::optional<std::string> data_root, palette_path, bundles_dir;
  app.add_option("--data", data_root, "dataset root");
  app.add_option("--palette", palette_path, "palette JSON");
  app.add_option("--bundles", bundles_dir, "directory holding one bundle per method");

  auto* prepare = app.add_subcommand("prepare", "build CFI and SFI caches");

  auto* train = app.add_subcommand("train", "train one pipeline and save its bundle");
  std::string method_name;
  std::optional<int> train_steps;
  train->add_option("--method", method_name, "ppa | pda | fda")->required();
  train->add_option("--steps", train_steps, "steps per stage");

  auto* synth = app.add_subcommand("synthesize", "translate one annotation PNG");
  std::string synth_method;
  std::string synth_input, synth_output;
  bool lenient = false;
  synth->add_option("--method", synth_method, "ppa | pda | fda")->required();
  synth->add_option("--input", synth_input, "annotation PNG");
  synth->add_option("--out", synth_output, "output PNG");
  synth->add_flag("--lenient", lenient, "snap off-palette colors instead of failing");

  auto* evaluate = app.add_subcommand("evaluate", "run a detector over synthesized images");
  std::string backend, backend_config, images_dir, runs_out = "runs.json";
  int parallelism = 1;
  evaluate->add_option("--backend", backend, "mock | cloud")->required();
  evaluate->add_option("--backend-config", backend_config, "detector JSON")->required();
  evaluate->add_option("--images", images_dir, "directory with one subdirectory per method")->required();
  evaluate->add_option("--out", runs_out, "detections JSON");
  evaluate->add_option("--parallelism", parallelism, "concurrent detector calls")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "render ODS tables from detections");
  std::string runs_in, detector_name = "detector", labels_path, csv_out;
  std::vector<std::string> targets;
  double min_confidence = 0.0;
  report->add_option("--runs", runs_in, "detections JSON from evaluate")->required();
  report->add_option("--detector", detector_name, "detector name for the table title");
  report->add_option("--labels", labels_path, "label map JSON");
  report->add_option("--target", targets, "target label (repeatable)");
  report->add_option("--min-confidence", min_confidence, "ignore detections below this");
  report->add_option("--csv", csv_out, "write CSV here");

  auto* serve = app.add_subcommand("serve", "start the HTTP inference service");
  std::optional<std::string> host;
  std::optional<int> port, max_dimension;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--max-dimension", max_dimension);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    CliSettings s = config_path.empty() ? CliSettings{} : CliSettings::load(config_path);
    if (data_root) s.data_root = *data_root;
    if (palette_path) s.palette = *palette_path;
    if (bundles_dir) s.bundles = *bundles_dir;
    const ClassPalette palette = s.load_palette();

    if (*prepare) {
      DatasetLoad load = load_dataset(s.data_root, s.split, palette);
      const auto cfi = ensure_cfi_cache(s.cache_root(), s.split, load.samples, s.pipeline.canny);
      const auto sfi = ensure_sfi_cache(s.cache_root(), s.split, load.samples, s.pipeline.segmentation);
      out << "cfi: " << cfi.generated << " generated, " << cfi.reused << " reused\n"
          << "sfi: " << sfi.generated << " generated, " << sfi.reused << " reused\n";
      return 0;
    }

    if (*train) {
      const Method method = parse_method(method_name);
      if (train_steps) {
        s.pipeline.stage1.training.steps = *train_steps;
        s.pipeline.stage2.training.steps = *train_steps;
      }
      std::vector<PairedSample> samples = training_samples(s, palette, out);
      if (method == Method::Pda) ensure_cfi_cache(s.cache_root(), s.split, samples, s.pipeline.canny);
      if (method == Method::Fda) ensure_sfi_cache(s.cache_root(), s.split, samples, s.pipeline.segmentation);
      PipelineHooks hooks;
      hooks.on_step = [&out](int stage, int step, const LossRecord& r) {
        if ((step + 1) % 50 == 0) out << "stage " << stage << " step " << step + 1 << " d=" << r.d_loss << " g_adv=" << r.g_adv << " g_l1=" << r.g_l1 << "\n";
      };
      const PipelineBundle bundle = train_method(method, samples, palette, s.pipeline, hooks);
      const fs::path dir = s.bundles / std::string(to_string(method));
      save_bundle(dir, bundle);
      out << "bundle written to " << dir.string() << "\n";
      return 0;
    }

    if (*synth) {
      const Method method = parse_method(synth_method);
      const PipelineBundle bundle = load_bundle(s.bundles / std::string(to_string(method)));
      if (synth_input.empty() || synth_output.empty()) {
        err << "error: synthesize needs --input and --out\n\n" << synth->help();
        return 1;
      }
      const AnnotationMap ppa = decode_annotation(read_png(synth_input), bundle.palette, !lenient);
      write_png(synth_output, synthesize(bundle, ppa));
      return 0;
    }

    if (*evaluate) {
      std::unique_ptr<DetectorBackend> detector;
      const nlohmann::json cfg = read_json_file(backend_config);
      if (backend == "mock") {
        detector = std::make_unique<MockDetector>(MockDetector::from_json(cfg));
      } else if (backend == "cloud") {
        ProviderConfig pc = ProviderConfig::from_json(cfg);
        if (const char* env = std::getenv("DETAUG_CACHE_DIR"); env && *env) pc.cache_dir = env;
        detector = std::make_unique<CloudDetector>(pc);
      } else {
        err << "error: unknown backend '" << backend << "'\n\n" << evaluate->help();
        return 1;
      }
      MethodRuns runs;
      for (const Method m : kAllMethods) {
        const fs::path dir = fs::path(images_dir) / std::string(to_string(m));
        if (!fs::is_directory(dir)) continue;
        std::vector<std::pair<std::string, RasterImage>> images;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
          if (entry.path().extension() == ".png") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) images.emplace_back(f.stem().string(), read_png(f));
        std::string name(to_string(m));
        std::transform(name.begin(), name.end(), name.begin(), ::toupper);
        runs[name] = detect_all(*detector, images, parallelism);
      }
      if (runs.empty()) fail(ErrorCode::MissingData, "no ppa/, pda/ or fda/ subdirectory under " + images_dir);
      std::ofstream f(runs_out);
      if (!f) fail(ErrorCode::IoError, "cannot write " + runs_out);
      f << runs_to_json(runs).dump(2) << "\n";
      out << "detections written to " << runs_out << "\n";
      return 0;
    }

    if (*report) {
      const LabelMap labels = labels_path.empty() ? LabelMap::airport_default() : LabelMap::from_json(read_json_file(labels_path));
      if (targets.empty()) targets = labels.targets();
      const auto reports = build_report(runs_from_json(read_json_file(runs_in)), detector_name, labels, targets, min_confidence);
      for (const auto& r : reports) out << to_text(r) << "\n";
      if (!csv_out.empty()) {
        std::ofstream f(csv_out);
        if (!f) fail(ErrorCode::IoError, "cannot write " + csv_out);
        f << to_csv(reports);
      }
      return 0;
    }

    if (*serve) {
      ServiceConfig sc;
      sc.host = host.value_or(s.host);
      sc.port = port.value_or(s.port);
      sc.max_dimension = max_dimension.value_or(s.max_dimension);
      sc.max_in_flight = s.max_in_flight;
      sc.request_timeout = std::chrono::milliseconds(s.timeout_ms);
      for (const Method m : kAllMethods) {
        const fs::path dir = s.bundles / std::string(to_string(m));
        if (fs::exists(dir / "manifest.json")) sc.bundles[m] = dir;
      }
      if (sc.bundles.empty()) fail(ErrorCode::IncompleteBundle, "no bundles under " + s.bundles.string());
      InferenceService service = InferenceService::load(sc);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      out << "serving " << service.methods()["methods"].dump() << " on " << sc.host << ":" << sc.port << std::endl;
      service.serve();
      g_service = nullptr;
      return 0;
    }
  } catch (const Error& e) {
    err << "detaug: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "detaug: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace detaug
