#pragma once

#include "detaug/dataset.hpp"
#include "detaug/gan.hpp"
#include "detaug/preprocess.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace detaug {

enum class Method { PpaBaseline, Pda, Fda };

inline constexpr Method kAllMethods[] = {Method::PpaBaseline, Method::Pda, Method::Fda};

std::string_view to_string(Method method);  // "ppa" | "pda" | "fda"
Method parse_method(std::string_view text);

struct StageConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainingConfig training;
};

struct PipelineConfig {
  StageConfig stage1;
  StageConfig stage2;
  CannyParams canny;
  SegmentationParams segmentation;
  // Ablation: build stage-2 composites from the true CFI/SFI instead of stage-1 predictions.
  bool ground_truth_detail = false;

  // Desk-scale defaults: 64x64 inputs, depth-6 U-Net, 200 steps per stage.
  static PipelineConfig toy(int input_size = 64);
};

nlohmann::json to_json(const PipelineConfig& config);

using PreprocessParams = std::variant<std::monostate, CannyParams, SegmentationParams>;

struct PipelineBundle {
  Method method = Method::PpaBaseline;
  std::optional<TrainedModel> stage1;  // absent for the baseline
  TrainedModel stage2;
  PreprocessParams preprocess;
  ClassPalette palette;
  ClassPalette converted;
  std::string dataset_hash;
  std::string configs_hash;

  explicit PipelineBundle(ClassPalette p) : palette(p), converted(converted_palette(p)) {}
};

// Test and ablation seams. stage1_override replaces the trained stage-1
// prediction for sample `index` when building stage-2 inputs.
struct PipelineHooks {
  std::function<RasterImage(std::size_t index, const RasterImage& stage1_input)> stage1_override;
  std::function<void(const std::vector<TrainingPair>&)> on_stage1_pairs;
  std::function<void(const std::vector<TrainingPair>&)> on_stage2_pairs;
  std::function<void(int stage, int step, const LossRecord&)> on_step;
};

// Two-stage PDA: PPA -> CFI, then overlay(PPA, predicted CFI) -> real image.
PipelineBundle train_pda(const std::vector<PairedSample>& samples, const ClassPalette& palette,
                         const PipelineConfig& config, const PipelineHooks& hooks = {});
// Two-stage FDA: PPA -> overlay(PPA, SFI), then overlay(PPA, predicted SFI) -> real image.
PipelineBundle train_fda(const std::vector<PairedSample>& samples, const ClassPalette& palette,
                         const PipelineConfig& config, const PipelineHooks& hooks = {});
// Single pix2pix on encoded PPA -> real image; uses config.stage2.
PipelineBundle train_baseline(const std::vector<PairedSample>& samples, const ClassPalette& palette,
                              const PipelineConfig& config, const PipelineHooks& hooks = {});

PipelineBundle train_method(Method method, const std::vector<PairedSample>& samples, const ClassPalette& palette,
                            const PipelineConfig& config, const PipelineHooks& hooks = {});

// Stage-1 training target for one sample (CFI for PDA, SFI with annotation
// colors overlaid for FDA). Uses sample.cfi / sample.sfi when present.
RasterImage stage1_target(Method method, const PairedSample& sample, const ClassPalette& palette,
                          const PipelineConfig& config);

struct SynthesisTrace {
  RasterImage stage1_input;
  std::optional<RasterImage> detail;
  std::optional<CompositeFeature> composite;
  RasterImage output;
};

using DetailOverride = std::function<RasterImage(const RasterImage& stage1_input)>;

// Eval-mode inference; reentrant over a const bundle. Sides of `ppa` must be
// multiples of 2^depth of both stage generators.
RasterImage synthesize(const PipelineBundle& bundle, const AnnotationMap& ppa);
SynthesisTrace synthesize_trace(const PipelineBundle& bundle, const AnnotationMap& ppa,
                                const DetailOverride& stage1_override = {});

// Largest 2^depth over the bundle's generators.
int size_multiple(const PipelineBundle& bundle);

std::string dataset_fingerprint(const std::vector<PairedSample>& samples);

// On-disk bundle:
//   manifest.json, palette.json, converted_palette.json, params.json
//   <method>/<stage>/<step>.ckpt, <method>/<stage>/latest, <method>/<stage>/loss.csv
void save_bundle(const std::filesystem::path& dir, const PipelineBundle& bundle);
PipelineBundle load_bundle(const std::filesystem::path& dir);
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace detaug
