#include "support/oracles.hpp"

#include "detaug/error.hpp"
#include "detaug/fixture.hpp"
#include "detaug/gan.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

using namespace detaug;

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

nn::Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  nn::Tensor t(n, c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = u(rng);
  return t;
}

GeneratorConfig tiny_generator(int depth, int size) {
  GeneratorConfig c;
  c.depth = depth;
  c.base_channels = 4;
  c.input_size = size;
  c.dropout_levels = GeneratorConfig::default_dropout_levels(depth);
  return c;
}

}  // namespace

TEST_CASE("generator config validation and layout") {
  GeneratorConfig c;
  c.depth = 3;
  c.input_size = 100;
  c.dropout_levels = {1, 2};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c.input_size = 64;
  c.dropout_levels = {3};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);

  CHECK(GeneratorConfig::default_dropout_levels(8) == std::set<int>{1, 2, 3});
  CHECK(GeneratorConfig::default_dropout_levels(2) == std::set<int>{1});
  CHECK(GeneratorConfig::default_dropout_levels(1).empty());

  GeneratorConfig d3;
  d3.depth = 3;
  d3.base_channels = 16;
  d3.input_size = 64;
  d3.dropout_levels = {1, 2};
  const UNetLayout l = unet_layout(d3);
  CHECK(l.encoder_out == std::vector<int>{16, 32, 64});
  CHECK(l.decoder_in[1] == l.decoder_out[0] + l.encoder_out[1]);
  CHECK(l.decoder_out.back() == 3);

  const UNetLayout full = unet_layout(GeneratorConfig{});
  CHECK(full.encoder_out.size() == 8);
  for (std::size_t i = 1; i < full.decoder_in.size(); ++i) {
    CHECK(full.decoder_in[i] == full.decoder_out[i - 1] + full.encoder_out[full.encoder_out.size() - 1 - i]);
  }
}

TEST_CASE("generator shape, range and determinism") {
  std::mt19937_64 rng(1);
  UNetGenerator g = build_generator(tiny_generator(3, 32), 5);
  const nn::Tensor x = random_tensor(2, 3, 32, 32, rng);
  const nn::Tensor a = g.apply(x);
  CHECK(a.same_shape(x));
  for (double v : a.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK(g.apply(x).data == a.data);

  const nn::Tensor wide = random_tensor(1, 3, 16, 40, rng);
  CHECK(g.apply(wide).same_shape(wide));
  CHECK(code_of([&] { g.apply(random_tensor(1, 3, 20, 32, rng)); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { g.apply(random_tensor(1, 1, 32, 32, rng)); }) == ErrorCode::ShapeMismatch);

  // Same seed, same weights.
  UNetGenerator g2 = build_generator(tiny_generator(3, 32), 5);
  CHECK(g2.apply(x).data == a.data);
  UNetGenerator g3 = build_generator(tiny_generator(3, 32), 6);
  CHECK(g3.apply(x).data != a.data);
}

TEST_CASE("initialization statistics") {
  UNetGenerator g = build_generator(GeneratorConfig{}, 3);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto* p : std::as_const(g).parameters()) {
    if (!p->name.ends_with(".weight")) continue;
    for (double v : p->value.data) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  CHECK(std::fabs(mean) < 1e-4);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.01).scale(0));
}

TEST_CASE("discriminator grid") {
  std::mt19937_64 rng(2);
  DiscriminatorConfig dc;
  dc.base_channels = 4;
  PatchDiscriminator d = build_discriminator(dc, 1);
  CHECK(d.output_size(256) == 30);
  CHECK(d.output_size(64) == 6);
  const nn::Tensor s = d.apply(random_tensor(1, 3, 64, 64, rng), random_tensor(1, 3, 64, 64, rng));
  CHECK(s.h == 6);
  CHECK(s.w == 6);
  for (double v : s.data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(code_of([&] { d.apply(random_tensor(1, 3, 64, 64, rng), random_tensor(1, 3, 32, 32, rng)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("loss values") {
  const double eps = kScoreEpsilon;
  const nn::Tensor hi(1, 1, 4, 4, 1 - eps), lo(1, 1, 4, 4, eps);
  const double v = gan_value(hi, lo);
  CHECK(v < 0.0);
  CHECK(v > -1e-6);

  const nn::Tensor half(1, 1, 4, 4, 0.5);
  CHECK(discriminator_loss(half, half) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12).scale(0));
  CHECK(discriminator_loss(hi, lo) < 1e-6);

  nn::Tensor mixed(1, 1, 1, 2);
  mixed.data = {0.2, 0.7};
  nn::Tensor first(1, 1, 1, 1, 0.2), second(1, 1, 1, 1, 0.7);
  CHECK(gan_value(mixed, mixed) == doctest::Approx((gan_value(first, first) + gan_value(second, second)) / 2));

  CHECK(code_of([] { clamp_score(1.5); }) == ErrorCode::DomainError);
  CHECK(code_of([] { clamp_score(-0.1); }) == ErrorCode::DomainError);
  CHECK(code_of([] { clamp_score(std::nan("")); }) == ErrorCode::DomainError);
  CHECK(clamp_score(0.0) == eps);
  CHECK(clamp_score(1.0) == 1 - eps);
  CHECK(clamp_score(1e-9) == eps);

  std::mt19937_64 rng(3);
  const nn::Tensor fake = random_tensor(1, 3, 4, 4, rng), target = random_tensor(1, 3, 4, 4, rng);
  const GeneratorLoss a = generator_loss(half, fake, target, 100);
  const GeneratorLoss b = generator_loss(half, fake, target, 200);
  CHECK(a.adv == doctest::Approx(std::log(2.0)));
  CHECK(b.total - b.adv == doctest::Approx(2 * (a.total - a.adv)));
  CHECK(generator_loss(half, target, fake, 100).l1 == a.l1);
  CHECK(generator_loss(half, fake, fake, 100).total == a.adv);
  CHECK(code_of([&] { generator_loss(half, fake, random_tensor(1, 3, 4, 5, rng), 1); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(4);
  const nn::Tensor s = random_tensor(1, 1, 3, 3, rng, 0.05, 0.95);
  const nn::Tensor gl = grad_neg_log(s);
  const nn::Tensor gc = grad_neg_log_complement(s);
  const nn::Tensor zero(1, 1, 3, 3, 0.5);
  for (std::size_t i = 0; i < s.size(); ++i) {
    nn::Tensor up = s, down = s;
    up.data[i] += 1e-6;
    down.data[i] -= 1e-6;
    // -mean log s == discriminator_loss(s, 0-ish) minus the fake part.
    const double fd_log = (discriminator_loss(up, zero) - discriminator_loss(down, zero)) / 2e-6;
    const double fd_comp = (discriminator_loss(zero, up) - discriminator_loss(zero, down)) / 2e-6;
    CHECK(gl.data[i] == doctest::Approx(fd_log).epsilon(1e-5).scale(0));
    CHECK(gc.data[i] == doctest::Approx(fd_comp).epsilon(1e-5).scale(0));
  }
}

TEST_CASE("network gradient check detects a corrupted gradient") {
  GeneratorConfig gc = tiny_generator(2, 8);
  gc.base_channels = 2;
  gc.dropout_levels = {};
  DiscriminatorConfig dc;
  dc.layers = 1;
  dc.base_channels = 2;
  UNetGenerator g = build_generator(gc, 1);
  PatchDiscriminator d = build_discriminator(dc, 2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 0.3);
  for (auto* p : g.parameters()) for (auto& v : p->value.data) v += n(rng);
  for (auto* p : d.parameters()) for (auto& v : p->value.data) v += n(rng);
  const nn::Tensor x = random_tensor(2, 3, 8, 8, rng), y = random_tensor(2, 3, 8, 8, rng);
  std::mt19937_64 drop(0);
  compute_gradients(g, d, x, y, 10, {true, &drop});

  auto g_loss = [&] {
    const nn::Tensor fake = g.apply(x);
    return generator_loss(d.apply(x, fake), fake, y, 10).total;
  };
  nn::Parameter* p = g.parameters().front();
  const double saved = p->value.data[0];
  p->value.data[0] = saved + 1e-6;
  const double up = g_loss();
  p->value.data[0] = saved - 1e-6;
  const double down = g_loss();
  p->value.data[0] = saved;
  const double numeric = (up - down) / 2e-6;
  CHECK(p->grad.data[0] == doctest::Approx(numeric).epsilon(1e-4).scale(0));
  CHECK_FALSE(p->grad.data[0] * 1.001 == doctest::Approx(numeric).epsilon(1e-4).scale(0));

  // compute_gradients leaves parameters untouched.
  CHECK(g_loss() == doctest::Approx((up + down) / 2).epsilon(1e-9).scale(0));
}

TEST_CASE("tensor conversion") {
  RasterImage img(2, 1);
  img.set_pixel(0, 0, {0, 255, 128});
  const nn::Tensor t = to_tensor(img);
  CHECK(t.at(0, 0, 0, 0) == -1.0);
  CHECK(t.at(0, 1, 0, 0) == 1.0);
  CHECK(to_raster(t) == img);
  nn::Tensor over = t;
  over.data[0] = 3.0;
  CHECK(to_raster(over).pixel(0, 0).r == 255);
}

TEST_CASE("training contracts") {
  CHECK(code_of([] { train_pix2pix({}, tiny_generator(2, 16), DiscriminatorConfig{1, 4}, TrainingConfig{}); }) ==
        ErrorCode::EmptyDataset);

  const ClassPalette p = ClassPalette::isaid_default();
  const auto samples = make_synthetic_dataset(3, 16, 2, p);
  std::vector<TrainingPair> pairs;
  for (const auto& s : samples) pairs.push_back({encode_annotation(s.annotation, p), s.real});
  TrainingConfig tc;
  tc.steps = 6;
  tc.batch_size = 2;
  tc.seed = 9;
  const DiscriminatorConfig dc{1, 4};
  int observed = 0;
  const TrainedModel a = train_pix2pix(pairs, tiny_generator(2, 16), dc, tc, [&](int, const LossRecord&) { ++observed; });
  const TrainedModel b = train_pix2pix(pairs, tiny_generator(2, 16), dc, tc);
  CHECK(observed == 6);
  CHECK(a.steps_run == 6);
  REQUIRE(a.loss_history.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.loss_history[i].d_loss == b.loss_history[i].d_loss);
    CHECK(a.loss_history[i].g_l1 == b.loss_history[i].g_l1);
    CHECK(std::isfinite(a.loss_history[i].g_adv));
  }
  tc.seed = 10;
  const TrainedModel c = train_pix2pix(pairs, tiny_generator(2, 16), dc, tc);
  CHECK(c.loss_history[0].g_l1 != a.loss_history[0].g_l1);

  std::vector<TrainingPair> wrong = pairs;
  wrong[1].target = RasterImage(8, 8);
  CHECK(code_of([&] { train_pix2pix(wrong, tiny_generator(2, 16), dc, tc); }) == ErrorCode::ShapeMismatch);

  tc.learning_rate = 1e300;
  tc.steps = 20;
  CHECK(code_of([&] { train_pix2pix(pairs, tiny_generator(2, 16), dc, tc); }) == ErrorCode::DivergenceDetected);
}

TEST_CASE("checkpoint round trip") {
  const ClassPalette p = ClassPalette::isaid_default();
  const auto samples = make_synthetic_dataset(2, 16, 3, p);
  std::vector<TrainingPair> pairs;
  for (const auto& s : samples) pairs.push_back({encode_annotation(s.annotation, p), s.real});
  TrainingConfig tc;
  tc.steps = 3;
  tc.seed = 4;
  const TrainedModel m = train_pix2pix(pairs, tiny_generator(2, 16), DiscriminatorConfig{1, 4}, tc);

  testing::TempDir tmp;
  save_checkpoint(tmp.path() / "m.ckpt", m);
  const TrainedModel r = load_checkpoint(tmp.path() / "m.ckpt");
  CHECK(r.steps_run == 3);
  CHECK(r.training_config.seed == 4);
  CHECK(r.loss_history.size() == 3);
  CHECK(r.translate(pairs[0].input) == m.translate(pairs[0].input));
  const auto a = std::as_const(m.generator).parameters();
  const auto b = std::as_const(r.generator).parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.data == b[i]->value.data);

  write_loss_csv(tmp.path() / "loss.csv", m.loss_history);
  std::ifstream csv(tmp.path() / "loss.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,d_loss,g_adv,g_l1");

  {
    std::ofstream junk(tmp.path() / "bad.ckpt", std::ios::binary);
    junk << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "bad.ckpt"), Error);
}
