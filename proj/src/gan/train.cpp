#include "detaug/error.hpp"
#include "detaug/gan.hpp"

#include <cmath>
#include <numeric>

namespace detaug {

using nn::Tensor;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void zero(std::span<nn::Parameter* const> params) {
  for (auto* p : params) p->grad.fill(0.0);
}

// Endless stream of indices, reshuffled every epoch.
class BatchOrder {
 public:
  BatchOrder(std::size_t count, std::uint64_t seed) : order_(count), rng_(seed) { reshuffle(); }

  std::size_t next() {
    if (cursor_ == order_.size()) reshuffle();
    return order_[cursor_++];
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(nn::unit_uniform(rng_) * static_cast<double>(i));
      std::swap(order_[i - 1], order_[std::min(j, i - 1)]);
    }
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
};

}  // namespace

RasterImage TrainedModel::translate(const RasterImage& input) const {
  return to_raster(generator.apply(to_tensor(input)));
}

Adam::Adam(std::vector<nn::Parameter*> params, double learning_rate, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::zero_grad() { zero(params_); }

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value.data;
    const auto& grad = params_[k]->grad.data;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double discriminator_gradients(PatchDiscriminator& discriminator, const Tensor& input, const Tensor& target,
                              const Tensor& fake, const nn::Context& ctx) {
  zero(discriminator.parameters());
  // Real and fake batches pass separately so each keeps its own batch statistics.
  const Tensor d_real = discriminator.forward(input, target, ctx);
  discriminator.backward(grad_neg_log(d_real));
  const Tensor d_fake = discriminator.forward(input, fake, ctx);
  discriminator.backward(grad_neg_log_complement(d_fake));
  return discriminator_loss(d_real, d_fake);
}

GeneratorLoss generator_gradients(UNetGenerator& generator, PatchDiscriminator& discriminator, const Tensor& input,
                                  const Tensor& target, const Tensor& fake, double l1_weight,
                                  const nn::Context& ctx) {
  zero(generator.parameters());
  const Tensor d_fake = discriminator.forward(input, fake, ctx);
  const GeneratorLoss loss = generator_loss(d_fake, fake, target, l1_weight);
  Tensor g_fake = discriminator.backward(grad_neg_log(d_fake));
  const Tensor g_l1 = grad_l1(fake, target, l1_weight);
  for (std::size_t i = 0; i < g_fake.size(); ++i) g_fake.data[i] += g_l1.data[i];
  generator.backward(g_fake);
  return loss;
}

StepGradients compute_gradients(UNetGenerator& generator, PatchDiscriminator& discriminator, const Tensor& input,
                                const Tensor& target, double l1_weight, const nn::Context& ctx) {
  StepGradients out;
  const Tensor fake = generator.forward(input, ctx);
  out.d_loss = discriminator_gradients(discriminator, input, target, fake, ctx);
  auto d_params = discriminator.parameters();
  std::vector<std::vector<double>> saved;
  for (auto* p : d_params) saved.push_back(p->grad.data);
  out.g = generator_gradients(generator, discriminator, input, target, fake, l1_weight, ctx);
  for (std::size_t k = 0; k < d_params.size(); ++k) d_params[k]->grad.data = std::move(saved[k]);
  return out;
}

TrainedModel train_pix2pix(const std::vector<TrainingPair>& pairs, const GeneratorConfig& gcfg,
                           const DiscriminatorConfig& dcfg, const TrainingConfig& tcfg,
                           const StepObserver& observer) {
  if (pairs.empty()) fail(ErrorCode::EmptyDataset, "no training pairs");
  gcfg.validate();
  dcfg.validate();
  tcfg.validate();
  for (const auto& p : pairs) {
    if (p.input.width() != gcfg.input_size || p.input.height() != gcfg.input_size || !p.input.same_shape(p.target)) {
      fail(ErrorCode::ShapeMismatch, "training pair " + std::to_string(p.input.width()) + "x" +
                                         std::to_string(p.input.height()) + " / " + std::to_string(p.target.width()) +
                                         "x" + std::to_string(p.target.height()) + " vs input_size " +
                                         std::to_string(gcfg.input_size));
    }
  }

  TrainedModel model;
  model.generator_config = gcfg;
  model.discriminator_config = dcfg;
  model.training_config = tcfg;
  model.generator = build_generator(gcfg, splitmix64(tcfg.seed ^ 0x67656eULL));
  model.discriminator = build_discriminator(dcfg, splitmix64(tcfg.seed ^ 0x646973ULL));

  Adam g_opt(model.generator.parameters(), tcfg.learning_rate, tcfg.adam_beta1, tcfg.adam_beta2);
  Adam d_opt(model.discriminator.parameters(), tcfg.learning_rate, tcfg.adam_beta1, tcfg.adam_beta2);
  BatchOrder order(pairs.size(), splitmix64(tcfg.seed ^ 0x6f7264ULL));
  std::mt19937_64 dropout_rng(splitmix64(tcfg.seed ^ 0x64726fULL));
  const nn::Context ctx{true, &dropout_rng};

  std::vector<const RasterImage*> inputs(static_cast<std::size_t>(tcfg.batch_size));
  std::vector<const RasterImage*> targets(static_cast<std::size_t>(tcfg.batch_size));
  for (int step = 0; step < tcfg.steps; ++step) {
    for (int b = 0; b < tcfg.batch_size; ++b) {
      const auto& pair = pairs[order.next()];
      inputs[static_cast<std::size_t>(b)] = &pair.input;
      targets[static_cast<std::size_t>(b)] = &pair.target;
    }
    const Tensor x = to_tensor(inputs);
    const Tensor y = to_tensor(targets);

    // D update first; the G step then sees the updated D.
    double d_loss = 0.0;
    GeneratorLoss g_loss;
    try {
      const Tensor fake = model.generator.forward(x, ctx);
      d_loss = discriminator_gradients(model.discriminator, x, y, fake, ctx);
      d_opt.step();
      g_loss = generator_gradients(model.generator, model.discriminator, x, y, fake, tcfg.l1_weight, ctx);
      g_opt.step();
    } catch (const Error& e) {
      // NaN scores from blown-up weights surface as a domain error in the losses.
      if (e.code() != ErrorCode::DomainError) throw;
      fail(ErrorCode::DivergenceDetected, "non-finite scores at step " + std::to_string(step) + ": " + e.what());
    }

    const LossRecord record{d_loss, g_loss.adv, g_loss.l1};
    if (!std::isfinite(record.d_loss) || !std::isfinite(record.g_adv) || !std::isfinite(record.g_l1)) {
      fail(ErrorCode::DivergenceDetected, "non-finite loss at step " + std::to_string(step));
    }
    model.loss_history.push_back(record);
    model.steps_run = step + 1;
    if (observer) observer(step, record);
  }
  return model;
}

}  // namespace detaug
