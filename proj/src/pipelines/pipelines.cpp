#include "detaug/pipelines.hpp"

#include "detaug/error.hpp"
#include "detaug/hashing.hpp"

namespace detaug {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::PpaBaseline: return "ppa";
    case Method::Pda: return "pda";
    case Method::Fda: return "fda";
  }
  return "ppa";
}

Method parse_method(std::string_view text) {
  if (text == "ppa") return Method::PpaBaseline;
  if (text == "pda") return Method::Pda;
  if (text == "fda") return Method::Fda;
  fail(ErrorCode::InvalidConfig, "unknown method '" + std::string(text) + "' (expected ppa|pda|fda)");
}

PipelineConfig PipelineConfig::toy(int input_size) {
  PipelineConfig c;
  int depth = 0;
  while ((input_size >> depth) > 1 && (input_size >> depth) % 2 == 0 && depth < 8) ++depth;
  for (StageConfig* s : {&c.stage1, &c.stage2}) {
    s->generator.depth = depth;
    s->generator.base_channels = 16;
    s->generator.input_size = input_size;
    s->generator.dropout_levels = GeneratorConfig::default_dropout_levels(depth);
    s->discriminator.layers = 3;
    s->discriminator.base_channels = 16;
    s->training.steps = 200;
  }
  c.stage1.training.seed = 1;
  c.stage2.training.seed = 2;
  return c;
}

nlohmann::json to_json(const PipelineConfig& config) {
  auto stage = [](const StageConfig& s) {
    return nlohmann::json{{"generator", to_json(s.generator)},
                          {"discriminator", to_json(s.discriminator)},
                          {"training", to_json(s.training)}};
  };
  return {{"stage1", stage(config.stage1)},
          {"stage2", stage(config.stage2)},
          {"canny", config.canny.canonical()},
          {"segmentation", config.segmentation.canonical()},
          {"ground_truth_detail", config.ground_truth_detail}};
}

std::string dataset_fingerprint(const std::vector<PairedSample>& samples) {
  std::string blob;
  for (const auto& s : samples) {
    blob += s.sample_id;
    blob.push_back('\0');
    const auto cells = s.annotation.cells();
    blob.append(reinterpret_cast<const char*>(cells.data()), cells.size_bytes());
    const auto bytes = s.real.bytes();
    blob.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  return sha256_hex(blob);
}

RasterImage stage1_target(Method method, const PairedSample& sample, const ClassPalette& palette,
                          const PipelineConfig& config) {
  switch (method) {
    case Method::Pda:
      return sample.cfi ? *sample.cfi : make_cfi(sample.real, config.canny);
    case Method::Fda: {
      const RasterImage sfi = sample.sfi ? *sample.sfi : make_sfi(sample.real, config.segmentation);
      return overlay(sample.annotation, sfi, palette).raster;
    }
    case Method::PpaBaseline:
      break;
  }
  fail(ErrorCode::InvalidConfig, "baseline has no stage-1 target");
}

namespace {

void check_samples(const std::vector<PairedSample>& samples, const ClassPalette& palette) {
  if (samples.empty()) fail(ErrorCode::EmptyDataset, "no samples to train on");
  for (const auto& s : samples) {
    validate_annotation(s.annotation, palette);
    if (s.annotation.width() != s.real.width() || s.annotation.height() != s.real.height()) {
      fail(ErrorCode::DimensionMismatch, "sample '" + s.sample_id + "' annotation and image sizes differ");
    }
  }
}

TrainedModel train_stage(int stage, const std::vector<TrainingPair>& pairs, const StageConfig& config,
                         const PipelineHooks& hooks) {
  StepObserver observer;
  if (hooks.on_step) observer = [&](int step, const LossRecord& r) { hooks.on_step(stage, step, r); };
  try {
    return train_pix2pix(pairs, config.generator, config.discriminator, config.training, observer);
  } catch (const Error& e) {
    fail(e.code(), "stage " + std::to_string(stage) + ": " + e.what());
  }
}

PipelineBundle train_two_stage(Method method, const std::vector<PairedSample>& samples, const ClassPalette& palette,
                               const PipelineConfig& config, const PipelineHooks& hooks) {
  check_samples(samples, palette);
  if (config.stage1.generator.input_size != config.stage2.generator.input_size) {
    fail(ErrorCode::InvalidConfig, "stage input sizes disagree");
  }
  PipelineBundle bundle(palette);
  bundle.method = method;
  if (method == Method::Pda) {
    bundle.preprocess = config.canny;
  } else {
    bundle.preprocess = config.segmentation;
  }
  bundle.dataset_hash = dataset_fingerprint(samples);
  bundle.configs_hash = sha256_hex(to_json(config).dump());

  // Step 1: detail targets.
  std::vector<RasterImage> targets;
  std::vector<TrainingPair> stage1_pairs;
  for (const auto& s : samples) {
    targets.push_back(stage1_target(method, s, palette, config));
    stage1_pairs.push_back({encode_annotation(s.annotation, palette), targets.back()});
  }
  if (hooks.on_stage1_pairs) hooks.on_stage1_pairs(stage1_pairs);

  // Step 2: PPA -> detail.
  bundle.stage1 = train_stage(1, stage1_pairs, config.stage1, hooks);

  // Step 3: composites from the trained stage-1 output.
  std::vector<TrainingPair> stage2_pairs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const RasterImage& input = stage1_pairs[i].input;
    RasterImage detail = hooks.stage1_override ? hooks.stage1_override(i, input)
                         : config.ground_truth_detail ? targets[i]
                                                      : bundle.stage1->translate(input);
    stage2_pairs.push_back({overlay(samples[i].annotation, detail, palette).raster, samples[i].real});
  }
  if (hooks.on_stage2_pairs) hooks.on_stage2_pairs(stage2_pairs);

  // Step 4: composite -> real.
  bundle.stage2 = train_stage(2, stage2_pairs, config.stage2, hooks);
  return bundle;
}

}  // namespace

PipelineBundle train_pda(const std::vector<PairedSample>& samples, const ClassPalette& palette,
                         const PipelineConfig& config, const PipelineHooks& hooks) {
  return train_two_stage(Method::Pda, samples, palette, config, hooks);
}

PipelineBundle train_fda(const std::vector<PairedSample>& samples, const ClassPalette& palette,
                         const PipelineConfig& config, const PipelineHooks& hooks) {
  return train_two_stage(Method::Fda, samples, palette, config, hooks);
}

PipelineBundle train_baseline(const std::vector<PairedSample>& samples, const ClassPalette& palette,
                              const PipelineConfig& config, const PipelineHooks& hooks) {
  check_samples(samples, palette);
  PipelineBundle bundle(palette);
  bundle.method = Method::PpaBaseline;
  bundle.dataset_hash = dataset_fingerprint(samples);
  bundle.configs_hash = sha256_hex(to_json(config).dump());
  std::vector<TrainingPair> pairs;
  for (const auto& s : samples) pairs.push_back({encode_annotation(s.annotation, palette), s.real});
  if (hooks.on_stage2_pairs) hooks.on_stage2_pairs(pairs);
  bundle.stage2 = train_stage(2, pairs, config.stage2, hooks);
  return bundle;
}

PipelineBundle train_method(Method method, const std::vector<PairedSample>& samples, const ClassPalette& palette,
                            const PipelineConfig& config, const PipelineHooks& hooks) {
  switch (method) {
    case Method::PpaBaseline: return train_baseline(samples, palette, config, hooks);
    case Method::Pda: return train_pda(samples, palette, config, hooks);
    case Method::Fda: return train_fda(samples, palette, config, hooks);
  }
  fail(ErrorCode::InvalidConfig, "unknown method");
}

int size_multiple(const PipelineBundle& bundle) {
  int depth = bundle.stage2.generator_config.depth;
  if (bundle.stage1) depth = std::max(depth, bundle.stage1->generator_config.depth);
  return 1 << depth;
}

SynthesisTrace synthesize_trace(const PipelineBundle& bundle, const AnnotationMap& ppa,
                                const DetailOverride& stage1_override) {
  if (bundle.method != Method::PpaBaseline && !bundle.stage1) {
    fail(ErrorCode::IncompleteBundle, std::string(to_string(bundle.method)) + " bundle has no stage-1 model");
  }
  validate_annotation(ppa, bundle.palette);
  const int m = size_multiple(bundle);
  if (ppa.width() % m != 0 || ppa.height() % m != 0) {
    fail(ErrorCode::ShapeMismatch, "annotation " + std::to_string(ppa.width()) + "x" + std::to_string(ppa.height()) +
                                       " not a multiple of " + std::to_string(m));
  }
  SynthesisTrace trace;
  trace.stage1_input = encode_annotation(ppa, bundle.palette);
  if (bundle.method == Method::PpaBaseline) {
    trace.output = bundle.stage2.translate(trace.stage1_input);
    return trace;
  }
  trace.detail = stage1_override ? stage1_override(trace.stage1_input) : bundle.stage1->translate(trace.stage1_input);
  trace.composite = overlay(ppa, *trace.detail, bundle.palette);
  trace.output = bundle.stage2.translate(trace.composite->raster);
  return trace;
}

RasterImage synthesize(const PipelineBundle& bundle, const AnnotationMap& ppa) {
  return synthesize_trace(bundle, ppa).output;
}

}  // namespace detaug
