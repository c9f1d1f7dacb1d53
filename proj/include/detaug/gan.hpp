#pragma once

#include "detaug/nn.hpp"
#include "detaug/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace detaug {

struct GeneratorConfig {
  int depth = 8;
  int base_channels = 64;
  int input_size = 256;
  std::set<int> dropout_levels = {1, 2, 3};  // decoder levels, 1 = innermost
  double dropout_rate = 0.5;

  void validate() const;
  // The three innermost decoder levels, never the output level.
  static std::set<int> default_dropout_levels(int depth);
};

struct DiscriminatorConfig {
  int layers = 3;  // stride-2 blocks; two stride-1 blocks follow
  int base_channels = 64;

  void validate() const;
};

struct TrainingConfig {
  int steps = 200;
  int batch_size = 1;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double l1_weight = 100.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
nlohmann::json to_json(const DiscriminatorConfig& c);
nlohmann::json to_json(const TrainingConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);
TrainingConfig training_config_from_json(const nlohmann::json& j);

// Channel bookkeeping of the U-Net. Encoder levels are 0-based
// (encoder_out[k] is the output of the k-th stride-2 conv); decoder levels
// are 1-based from the bottleneck. Decoder level 1 consumes the bottleneck;
// decoder level i > 1 consumes concat(decoder i-1 output, encoder level n-i output).
struct UNetLayout {
  std::vector<int> encoder_out;  // size depth
  std::vector<int> decoder_in;   // index i-1 for decoder level i
  std::vector<int> decoder_out;
};
UNetLayout unet_layout(const GeneratorConfig& config);

class UNetGenerator {
 public:
  UNetGenerator() = default;
  explicit UNetGenerator(const GeneratorConfig& config);

  const GeneratorConfig& config() const { return config_; }
  const UNetLayout& layout() const { return layout_; }

  // Input/output in [-1, 1], shape [N, 3, H, W] with H, W multiples of 2^depth.
  nn::Tensor forward(const nn::Tensor& x, const nn::Context& ctx);
  nn::Tensor apply(const nn::Tensor& x) const;
  // Accumulates parameter gradients; returns the input gradient.
  nn::Tensor backward(const nn::Tensor& grad_out);

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

 private:
  void check_input(const nn::Tensor& x) const;

  GeneratorConfig config_;
  UNetLayout layout_;
  std::vector<nn::Sequential> down_;  // per encoder level
  std::vector<nn::Sequential> up_;    // per decoder level
  std::vector<int> skip_channels_;    // cached for backward
};

class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  explicit PatchDiscriminator(const DiscriminatorConfig& config);

  const DiscriminatorConfig& config() const { return config_; }

  // condition and candidate [N, 3, H, W] -> probabilities [N, 1, P, P].
  nn::Tensor forward(const nn::Tensor& condition, const nn::Tensor& candidate, const nn::Context& ctx);
  nn::Tensor apply(const nn::Tensor& condition, const nn::Tensor& candidate) const;
  // Returns the gradient with respect to the candidate image.
  nn::Tensor backward(const nn::Tensor& grad_scores);

  // Score-grid side for a square input of the given side.
  int output_size(int input_size) const;

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

 private:
  DiscriminatorConfig config_;
  nn::Sequential net_;
};

UNetGenerator build_generator(const GeneratorConfig& config, std::uint64_t seed);
PatchDiscriminator build_discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

std::size_t parameter_count(std::span<const nn::Parameter* const> params);

// ---------------------------------------------------------------- losses

inline constexpr double kScoreEpsilon = 1e-7;

// Scores clamped into [eps, 1 - eps]; throws DomainError outside (0, 1).
double clamp_score(double score);

// mean log D(x) + mean log(1 - D(G)).
double gan_value(const nn::Tensor& d_real, const nn::Tensor& d_fake);
double discriminator_loss(const nn::Tensor& d_real, const nn::Tensor& d_fake);

struct GeneratorLoss {
  double total = 0;
  double adv = 0;
  double l1 = 0;
};
GeneratorLoss generator_loss(const nn::Tensor& d_fake, const nn::Tensor& fake, const nn::Tensor& target,
                             double l1_weight);

// d/d(score) of -mean log(score) and of -mean log(1 - score).
nn::Tensor grad_neg_log(const nn::Tensor& scores);
nn::Tensor grad_neg_log_complement(const nn::Tensor& scores);
// d/d(fake) of weight * mean |fake - target|.
nn::Tensor grad_l1(const nn::Tensor& fake, const nn::Tensor& target, double weight);

// ---------------------------------------------------------------- tensors

nn::Tensor to_tensor(const RasterImage& image);  // [0,255] -> [-1,1]
nn::Tensor to_tensor(std::span<const RasterImage* const> images);
RasterImage to_raster(const nn::Tensor& t, int index = 0);  // [-1,1] -> [0,255], rounded

// --------------------------------------------------------------- training

struct LossRecord {
  double d_loss = 0;
  double g_adv = 0;
  double g_l1 = 0;
};

struct TrainingPair {
  RasterImage input;
  RasterImage target;
};

struct TrainedModel {
  GeneratorConfig generator_config;
  DiscriminatorConfig discriminator_config;
  TrainingConfig training_config;
  UNetGenerator generator;
  PatchDiscriminator discriminator;
  std::vector<LossRecord> loss_history;
  int steps_run = 0;

  // Eval-mode generator on one image; reentrant over a const model.
  RasterImage translate(const RasterImage& input) const;
};

struct StepGradients {
  double d_loss = 0;
  GeneratorLoss g;
};

// Zeroes D gradients, then accumulates gradients of discriminator_loss for
// the given generator output (treated as a constant). Returns the loss.
double discriminator_gradients(PatchDiscriminator& discriminator, const nn::Tensor& input,
                               const nn::Tensor& target, const nn::Tensor& fake, const nn::Context& ctx);

// Zeroes G gradients and backpropagates generator_loss through D into G.
// `fake` must come from the generator's most recent forward(). Leaves stale
// gradients on D.
GeneratorLoss generator_gradients(UNetGenerator& generator, PatchDiscriminator& discriminator,
                                  const nn::Tensor& input, const nn::Tensor& target, const nn::Tensor& fake,
                                  double l1_weight, const nn::Context& ctx);

// Zeroes and fills parameter gradients of both networks for one batch:
// D gradients of discriminator_loss (generator output detached), G gradients
// of generator_loss through D. No parameters are modified.
StepGradients compute_gradients(UNetGenerator& generator, PatchDiscriminator& discriminator,
                                const nn::Tensor& input, const nn::Tensor& target, double l1_weight,
                                const nn::Context& ctx);

using StepObserver = std::function<void(int step, const LossRecord&)>;

TrainedModel train_pix2pix(const std::vector<TrainingPair>& pairs, const GeneratorConfig& gcfg,
                           const DiscriminatorConfig& dcfg, const TrainingConfig& tcfg,
                           const StepObserver& observer = {});

class Adam {
 public:
  Adam(std::vector<nn::Parameter*> params, double learning_rate, double beta1, double beta2,
       double epsilon = 1e-8);
  void step();
  void zero_grad();

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// ------------------------------------------------------------- checkpoint

// Binary archive: magic, JSON header (configs, seed, step count, tensor
// names and shapes), then little-endian float64 parameter payload.
void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace detaug
