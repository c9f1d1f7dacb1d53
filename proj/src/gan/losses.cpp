#include "detaug/error.hpp"
#include "detaug/gan.hpp"

#include <algorithm>
#include <cmath>

namespace detaug {

using nn::Tensor;

double clamp_score(double score) {
  if (!(score > 0.0 && score < 1.0)) {
    // Sigmoid outputs can round to exactly 0 or 1 in double precision.
    if (score == 0.0 || score == 1.0) return std::clamp(score, kScoreEpsilon, 1.0 - kScoreEpsilon);
    fail(ErrorCode::DomainError, "score " + std::to_string(score) + " outside (0,1)");
  }
  return std::clamp(score, kScoreEpsilon, 1.0 - kScoreEpsilon);
}

namespace {

double mean_log(const Tensor& scores, bool complement) {
  if (scores.size() == 0) fail(ErrorCode::DomainError, "empty score grid");
  double acc = 0;
  for (double s : scores.data) {
    const double c = clamp_score(s);
    acc += std::log(complement ? 1.0 - c : c);
  }
  return acc / static_cast<double>(scores.size());
}

bool inside_clamp(double s) { return s > kScoreEpsilon && s < 1.0 - kScoreEpsilon; }

}  // namespace

double gan_value(const Tensor& d_real, const Tensor& d_fake) {
  return mean_log(d_real, false) + mean_log(d_fake, true);
}

double discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
  return -mean_log(d_real, false) - mean_log(d_fake, true);
}

GeneratorLoss generator_loss(const Tensor& d_fake, const Tensor& fake, const Tensor& target, double l1_weight) {
  if (!fake.same_shape(target)) {
    fail(ErrorCode::ShapeMismatch, "fake " + nn::shape_string(fake) + " vs target " + nn::shape_string(target));
  }
  GeneratorLoss loss;
  loss.adv = -mean_log(d_fake, false);
  double acc = 0;
  for (std::size_t i = 0; i < fake.size(); ++i) acc += std::fabs(fake.data[i] - target.data[i]);
  loss.l1 = fake.size() ? acc / static_cast<double>(fake.size()) : 0.0;
  loss.total = loss.adv + l1_weight * loss.l1;
  return loss;
}

Tensor grad_neg_log(const Tensor& scores) {
  Tensor g(scores.n, scores.c, scores.h, scores.w);
  const double inv = 1.0 / static_cast<double>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores.data[i];
    g.data[i] = inside_clamp(s) ? -inv / s : 0.0;
  }
  return g;
}

Tensor grad_neg_log_complement(const Tensor& scores) {
  Tensor g(scores.n, scores.c, scores.h, scores.w);
  const double inv = 1.0 / static_cast<double>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores.data[i];
    g.data[i] = inside_clamp(s) ? inv / (1.0 - s) : 0.0;
  }
  return g;
}

Tensor grad_l1(const Tensor& fake, const Tensor& target, double weight) {
  Tensor g(fake.n, fake.c, fake.h, fake.w);
  const double scale = weight / static_cast<double>(fake.size());
  for (std::size_t i = 0; i < fake.size(); ++i) {
    const double d = fake.data[i] - target.data[i];
    g.data[i] = d > 0 ? scale : (d < 0 ? -scale : 0.0);
  }
  return g;
}

Tensor to_tensor(const RasterImage& image) {
  const RasterImage* one[] = {&image};
  return to_tensor(one);
}

Tensor to_tensor(std::span<const RasterImage* const> images) {
  if (images.empty()) fail(ErrorCode::EmptyDataset, "no images to batch");
  const int h = images[0]->height();
  const int w = images[0]->width();
  Tensor t(static_cast<int>(images.size()), 3, h, w);
  for (int n = 0; n < t.n; ++n) {
    const RasterImage& img = *images[static_cast<std::size_t>(n)];
    if (img.width() != w || img.height() != h) fail(ErrorCode::ShapeMismatch, "batch images differ in size");
    const auto bytes = img.bytes();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 3;
        for (int c = 0; c < 3; ++c) t.at(n, c, y, x) = bytes[o + static_cast<std::size_t>(c)] / 127.5 - 1.0;
      }
    }
  }
  return t;
}

RasterImage to_raster(const Tensor& t, int index) {
  if (t.c != 3) fail(ErrorCode::ShapeMismatch, "expected 3 channels, got " + nn::shape_string(t));
  RasterImage out(t.w, t.h);
  auto bytes = out.bytes();
  for (int y = 0; y < t.h; ++y) {
    for (int x = 0; x < t.w; ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * t.w + x) * 3;
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp((t.at(index, c, y, x) + 1.0) * 127.5, 0.0, 255.0);
        bytes[o + static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

}  // namespace detaug
