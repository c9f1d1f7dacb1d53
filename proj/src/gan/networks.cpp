#include "detaug/error.hpp"
#include "detaug/gan.hpp"

#include <algorithm>
#include <cmath>

namespace detaug {

using nn::Activation;
using nn::ActivationKind;
using nn::Tensor;

void GeneratorConfig::validate() const {
  if (depth < 1) fail(ErrorCode::InvalidConfig, "generator depth must be >= 1");
  if (base_channels < 1) fail(ErrorCode::InvalidConfig, "generator base_channels must be >= 1");
  if (depth > 30 || input_size <= 0 || input_size % (1 << depth) != 0) {
    fail(ErrorCode::InvalidConfig, "input_size " + std::to_string(input_size) + " not divisible by 2^" +
                                       std::to_string(depth));
  }
  for (int level : dropout_levels) {
    if (level < 1 || level >= depth) {
      fail(ErrorCode::InvalidConfig, "dropout level " + std::to_string(level) + " outside 1.." +
                                         std::to_string(depth - 1));
    }
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorCode::InvalidConfig, "dropout_rate must be in [0,1)");
}

std::set<int> GeneratorConfig::default_dropout_levels(int depth) {
  std::set<int> levels;
  for (int i = 1; i <= std::min(3, depth - 1); ++i) levels.insert(i);
  return levels;
}

void DiscriminatorConfig::validate() const {
  if (layers < 1) fail(ErrorCode::InvalidConfig, "discriminator layers must be >= 1");
  if (base_channels < 1) fail(ErrorCode::InvalidConfig, "discriminator base_channels must be >= 1");
}

void TrainingConfig::validate() const {
  if (steps < 1 || batch_size < 1) fail(ErrorCode::InvalidConfig, "steps and batch_size must be positive");
  if (!(learning_rate > 0) || !(l1_weight > 0)) fail(ErrorCode::InvalidConfig, "learning_rate and l1_weight must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    fail(ErrorCode::InvalidConfig, "adam betas must be in [0,1)");
  }
}

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"depth", c.depth}, {"base_channels", c.base_channels}, {"input_size", c.input_size},
          {"dropout_levels", c.dropout_levels}, {"dropout_rate", c.dropout_rate}};
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"layers", c.layers}, {"base_channels", c.base_channels}};
}

nlohmann::json to_json(const TrainingConfig& c) {
  return {{"steps", c.steps},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1}, {"adam_beta2", c.adam_beta2}, {"l1_weight", c.l1_weight},
          {"seed", c.seed}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.input_size = j.at("input_size").get<int>();
  c.dropout_levels = j.at("dropout_levels").get<std::set<int>>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  return {j.at("layers").get<int>(), j.at("base_channels").get<int>()};
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.steps = j.at("steps").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.l1_weight = j.at("l1_weight").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

UNetLayout unet_layout(const GeneratorConfig& config) {
  const int n = config.depth;
  UNetLayout layout;
  for (int k = 0; k < n; ++k) layout.encoder_out.push_back(config.base_channels * std::min(1 << std::min(k, 3), 8));
  for (int i = 1; i <= n; ++i) {
    const int in = i == 1 ? layout.encoder_out[static_cast<std::size_t>(n - 1)]
                          : layout.decoder_out.back() + layout.encoder_out[static_cast<std::size_t>(n - i)];
    const int out = i < n ? layout.encoder_out[static_cast<std::size_t>(n - i - 1)] : 3;
    layout.decoder_in.push_back(in);
    layout.decoder_out.push_back(out);
  }
  return layout;
}

UNetGenerator::UNetGenerator(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  layout_ = unet_layout(config_);
  const int n = config_.depth;
  for (int k = 0; k < n; ++k) {
    const bool innermost = k == n - 1;
    const std::string name = "enc" + std::to_string(k);
    nn::Sequential block;
    if (k > 0) block.add(Activation(ActivationKind::LeakyRelu, 0.2));
    const int in = k == 0 ? 3 : layout_.encoder_out[static_cast<std::size_t>(k - 1)];
    const bool norm = k > 0 && !innermost;
    block.add(nn::Conv2d(name, in, layout_.encoder_out[static_cast<std::size_t>(k)], 4, 2, 1, !norm));
    if (norm) block.add(nn::BatchNorm2d(name + ".bn", layout_.encoder_out[static_cast<std::size_t>(k)]));
    down_.push_back(std::move(block));
  }
  for (int i = 1; i <= n; ++i) {
    const bool outermost = i == n;
    const std::string name = "dec" + std::to_string(i);
    const int in = layout_.decoder_in[static_cast<std::size_t>(i - 1)];
    const int out = layout_.decoder_out[static_cast<std::size_t>(i - 1)];
    // Skip bookkeeping: concat width must equal the two sources.
    if (i > 1 && in != layout_.decoder_out[static_cast<std::size_t>(i - 2)] +
                           layout_.encoder_out[static_cast<std::size_t>(n - i)]) {
      fail(ErrorCode::InvalidConfig, "skip connection channel mismatch at decoder level " + std::to_string(i));
    }
    nn::Sequential block;
    block.add(Activation(ActivationKind::Relu));
    block.add(nn::ConvTranspose2d(name, in, out, 4, 2, 1, outermost));
    if (outermost) {
      block.add(Activation(ActivationKind::Tanh));
    } else {
      block.add(nn::BatchNorm2d(name + ".bn", out));
      if (config_.dropout_levels.contains(i)) block.add(nn::Dropout(config_.dropout_rate));
    }
    up_.push_back(std::move(block));
  }
}

void UNetGenerator::check_input(const Tensor& x) const {
  const int m = 1 << config_.depth;
  if (x.c != 3 || x.h <= 0 || x.w <= 0 || x.h % m != 0 || x.w % m != 0) {
    fail(ErrorCode::ShapeMismatch, "generator input " + nn::shape_string(x) + " needs 3 channels and sides divisible by " +
                                       std::to_string(m));
  }
}

Tensor UNetGenerator::forward(const Tensor& x, const nn::Context& ctx) {
  check_input(x);
  const int n = config_.depth;
  std::vector<Tensor> enc;
  enc.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    enc.push_back(down_[static_cast<std::size_t>(k)].forward(k == 0 ? x : enc.back(), ctx));
  }
  skip_channels_.clear();
  Tensor d = up_[0].forward(enc.back(), ctx);
  for (int i = 2; i <= n; ++i) {
    skip_channels_.push_back(d.c);
    d = up_[static_cast<std::size_t>(i - 1)].forward(nn::concat_channels(d, enc[static_cast<std::size_t>(n - i)]), ctx);
  }
  return d;
}

Tensor UNetGenerator::apply(const Tensor& x) const {
  check_input(x);
  const int n = config_.depth;
  std::vector<Tensor> enc;
  enc.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) enc.push_back(down_[static_cast<std::size_t>(k)].apply(k == 0 ? x : enc.back()));
  Tensor d = up_[0].apply(enc.back());
  for (int i = 2; i <= n; ++i) {
    d = up_[static_cast<std::size_t>(i - 1)].apply(nn::concat_channels(d, enc[static_cast<std::size_t>(n - i)]));
  }
  return d;
}

Tensor UNetGenerator::backward(const Tensor& grad_out) {
  const int n = config_.depth;
  std::vector<Tensor> enc_grad(static_cast<std::size_t>(n));
  auto accumulate = [&](int level, const Tensor& g) {
    Tensor& slot = enc_grad[static_cast<std::size_t>(level)];
    if (slot.size() == 0) {
      slot = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) slot.data[i] += g.data[i];
    }
  };
  Tensor g = grad_out;
  for (int i = n; i >= 2; --i) {
    Tensor joined = up_[static_cast<std::size_t>(i - 1)].backward(g);
    Tensor g_dec, g_skip;
    nn::split_channels(joined, skip_channels_[static_cast<std::size_t>(i - 2)], g_dec, g_skip);
    accumulate(n - i, g_skip);
    g = std::move(g_dec);
  }
  accumulate(n - 1, up_[0].backward(g));
  Tensor g_in;
  for (int k = n - 1; k >= 0; --k) {
    Tensor g_prev = down_[static_cast<std::size_t>(k)].backward(enc_grad[static_cast<std::size_t>(k)]);
    if (k > 0) {
      accumulate(k - 1, g_prev);
    } else {
      g_in = std::move(g_prev);
    }
  }
  return g_in;
}

std::vector<nn::Parameter*> UNetGenerator::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& b : down_) b.collect(out);
  for (auto& b : up_) b.collect(out);
  return out;
}

std::vector<const nn::Parameter*> UNetGenerator::parameters() const {
  std::vector<const nn::Parameter*> out;
  for (const auto& b : down_) b.collect(out);
  for (const auto& b : up_) b.collect(out);
  return out;
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& config) : config_(config) {
  config_.validate();
  const int b = config_.base_channels;
  auto width = [b](int i) { return b * std::min(1 << std::min(i, 3), 8); };
  net_.add(nn::Conv2d("disc0", 6, b, 4, 2, 1, true));
  net_.add(Activation(ActivationKind::LeakyRelu, 0.2));
  for (int i = 1; i < config_.layers; ++i) {
    const std::string name = "disc" + std::to_string(i);
    net_.add(nn::Conv2d(name, width(i - 1), width(i), 4, 2, 1, false));
    net_.add(nn::BatchNorm2d(name + ".bn", width(i)));
    net_.add(Activation(ActivationKind::LeakyRelu, 0.2));
  }
  const int last = config_.layers;
  const std::string name = "disc" + std::to_string(last);
  net_.add(nn::Conv2d(name, width(last - 1), width(last), 4, 1, 1, false));
  net_.add(nn::BatchNorm2d(name + ".bn", width(last)));
  net_.add(Activation(ActivationKind::LeakyRelu, 0.2));
  net_.add(nn::Conv2d("disc_out", width(last), 1, 4, 1, 1, true));
  net_.add(Activation(ActivationKind::Sigmoid));
}

int PatchDiscriminator::output_size(int input_size) const {
  int s = input_size;
  for (const auto& layer : net_.layers()) {
    if (const auto* conv = std::get_if<nn::Conv2d>(&layer)) s = conv->out_size(s);
  }
  return s;
}

namespace {

void check_pair(const Tensor& condition, const Tensor& candidate) {
  if (!condition.same_shape(candidate) || condition.c != 3) {
    fail(ErrorCode::ShapeMismatch, "discriminator condition " + nn::shape_string(condition) + " vs candidate " +
                                       nn::shape_string(candidate));
  }
}

}  // namespace

Tensor PatchDiscriminator::forward(const Tensor& condition, const Tensor& candidate, const nn::Context& ctx) {
  check_pair(condition, candidate);
  return net_.forward(nn::concat_channels(condition, candidate), ctx);
}

Tensor PatchDiscriminator::apply(const Tensor& condition, const Tensor& candidate) const {
  check_pair(condition, candidate);
  return net_.apply(nn::concat_channels(condition, candidate));
}

Tensor PatchDiscriminator::backward(const Tensor& grad_scores) {
  Tensor joined = net_.backward(grad_scores);
  Tensor g_condition, g_candidate;
  nn::split_channels(joined, 3, g_condition, g_candidate);
  return g_candidate;
}

std::vector<nn::Parameter*> PatchDiscriminator::parameters() {
  std::vector<nn::Parameter*> out;
  net_.collect(out);
  return out;
}

std::vector<const nn::Parameter*> PatchDiscriminator::parameters() const {
  std::vector<const nn::Parameter*> out;
  net_.collect(out);
  return out;
}

UNetGenerator build_generator(const GeneratorConfig& config, std::uint64_t seed) {
  UNetGenerator g(config);
  nn::initialize(g.parameters(), seed);
  return g;
}

PatchDiscriminator build_discriminator(const DiscriminatorConfig& config, std::uint64_t seed) {
  PatchDiscriminator d(config);
  nn::initialize(d.parameters(), seed);
  return d;
}

std::size_t parameter_count(std::span<const nn::Parameter* const> params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

}  // namespace detaug
