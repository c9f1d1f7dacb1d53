#include "detaug/nn.hpp"

#include "detaug/error.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace detaug::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct Geometry {
  int channels, height, width;   // image side
  int kernel, stride, pad;
  int out_h, out_w;              // column side
};

// col[(c*k + ky)*k + kx][oy*out_w + ox] = image[c][oy*s - p + ky][ox*s - p + kx]
void im2col(const double* image, const Geometry& g, double* col) {
  const int cols = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        double* row = col + static_cast<std::ptrdiff_t>((c * g.kernel + ky) * g.kernel + kx) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (static_cast<std::ptrdiff_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the image.
void col2im(const double* col, const Geometry& g, double* image) {
  const int cols = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const double* row = col + static_cast<std::ptrdiff_t>((c * g.kernel + ky) * g.kernel + kx) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          double* dst = image + (static_cast<std::ptrdiff_t>(c) * g.height + iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Parameter make_param(std::string name, int n, int c, int h, int w) {
  return {std::move(name), Tensor(n, c, h, w), Tensor(n, c, h, w)};
}

}  // namespace

std::string shape_string(const Tensor& t) {
  return "[" + std::to_string(t.n) + "," + std::to_string(t.c) + "," + std::to_string(t.h) + "," +
         std::to_string(t.w) + "]";
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    fail(ErrorCode::ShapeMismatch, "concat " + shape_string(a) + " with " + shape_string(b));
  }
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    auto dst = out.sample(i);
    auto sa = a.sample(i);
    auto sb = b.sample(i);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<std::ptrdiff_t>(sa.size()));
  }
  return out;
}

void split_channels(const Tensor& ab, int a_channels, Tensor& a, Tensor& b) {
  a = Tensor(ab.n, a_channels, ab.h, ab.w);
  b = Tensor(ab.n, ab.c - a_channels, ab.h, ab.w);
  for (int i = 0; i < ab.n; ++i) {
    auto src = ab.sample(i);
    auto da = a.sample(i);
    auto db = b.sample(i);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(da.size()), da.begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(da.size()), src.end(), db.begin());
  }
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad, bool bias)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad), has_bias_(bias),
      weight_(make_param(name + ".weight", out_channels, in_channels, kernel, kernel)),
      bias_(bias ? make_param(name + ".bias", 1, out_channels, 1, 1) : Parameter{}) {}

Tensor Conv2d::apply(const Tensor& x) const {
  if (x.c != in_) fail(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(in_) + " channels, got " + shape_string(x));
  const int oh = out_size(x.h);
  const int ow = out_size(x.w);
  if (oh <= 0 || ow <= 0) fail(ErrorCode::ShapeMismatch, "conv input too small: " + shape_string(x));
  const Geometry g{in_, x.h, x.w, kernel_, stride_, pad_, oh, ow};
  const int rows = in_ * kernel_ * kernel_;
  const int cols = oh * ow;
  Tensor out(x.n, out_, oh, ow);
  std::vector<double> col(static_cast<std::size_t>(rows) * cols);
  const ConstMatrixMap w(weight_.value.data.data(), out_, rows);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i).data(), g, col.data());
    MatrixMap y(out.sample(i).data(), out_, cols);
    y.noalias() = w * ConstMatrixMap(col.data(), rows, cols);
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) y.row(o).array() += bias_.value.data[static_cast<std::size_t>(o)];
    }
  }
  return out;
}

Tensor Conv2d::forward(const Tensor& x, const Context&) {
  if (x.c != in_) fail(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(in_) + " channels, got " + shape_string(x));
  input_ = x;
  const int oh = out_size(x.h);
  const int ow = out_size(x.w);
  if (oh <= 0 || ow <= 0) fail(ErrorCode::ShapeMismatch, "conv input too small: " + shape_string(x));
  const Geometry g{in_, x.h, x.w, kernel_, stride_, pad_, oh, ow};
  const int rows = in_ * kernel_ * kernel_;
  const int cols = oh * ow;
  cols_.assign(static_cast<std::size_t>(x.n), std::vector<double>(static_cast<std::size_t>(rows) * cols));
  Tensor out(x.n, out_, oh, ow);
  const ConstMatrixMap w(weight_.value.data.data(), out_, rows);
  for (int i = 0; i < x.n; ++i) {
    auto& col = cols_[static_cast<std::size_t>(i)];
    im2col(x.sample(i).data(), g, col.data());
    MatrixMap y(out.sample(i).data(), out_, cols);
    y.noalias() = w * ConstMatrixMap(col.data(), rows, cols);
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) y.row(o).array() += bias_.value.data[static_cast<std::size_t>(o)];
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  const int oh = grad_out.h;
  const int ow = grad_out.w;
  const Geometry g{in_, x.h, x.w, kernel_, stride_, pad_, oh, ow};
  const int rows = in_ * kernel_ * kernel_;
  const int cols = oh * ow;
  Tensor grad_in(x.n, x.c, x.h, x.w);
  std::vector<double> dcol(static_cast<std::size_t>(rows) * cols);
  MatrixMap dw(weight_.grad.data.data(), out_, rows);
  const ConstMatrixMap w(weight_.value.data.data(), out_, rows);
  for (int i = 0; i < x.n; ++i) {
    const ConstMatrixMap dy(grad_out.sample(i).data(), out_, cols);
    const ConstMatrixMap col(cols_[static_cast<std::size_t>(i)].data(), rows, cols);
    dw.noalias() += dy * col.transpose();
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) bias_.grad.data[static_cast<std::size_t>(o)] += dy.row(o).sum();
    }
    MatrixMap dc(dcol.data(), rows, cols);
    dc.noalias() = w.transpose() * dy;
    col2im(dcol.data(), g, grad_in.sample(i).data());
  }
  return grad_in;
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

void Conv2d::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                                 int pad, bool bias)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad), has_bias_(bias),
      weight_(make_param(name + ".weight", in_channels, out_channels, kernel, kernel)),
      bias_(bias ? make_param(name + ".bias", 1, out_channels, 1, 1) : Parameter{}) {}

Tensor ConvTranspose2d::apply(const Tensor& x) const {
  if (x.c != in_) {
    fail(ErrorCode::ShapeMismatch, "transposed conv expects " + std::to_string(in_) + " channels, got " + shape_string(x));
  }
  const int oh = out_size(x.h);
  const int ow = out_size(x.w);
  const Geometry g{out_, oh, ow, kernel_, stride_, pad_, x.h, x.w};
  const int rows = out_ * kernel_ * kernel_;
  const int cols = x.h * x.w;
  Tensor out(x.n, out_, oh, ow);
  std::vector<double> col(static_cast<std::size_t>(rows) * cols);
  const ConstMatrixMap w(weight_.value.data.data(), in_, rows);
  for (int i = 0; i < x.n; ++i) {
    MatrixMap c(col.data(), rows, cols);
    c.noalias() = w.transpose() * ConstMatrixMap(x.sample(i).data(), in_, cols);
    col2im(col.data(), g, out.sample(i).data());
    if (has_bias_) {
      auto s = out.sample(i);
      for (int o = 0; o < out_; ++o) {
        const double b = bias_.value.data[static_cast<std::size_t>(o)];
        for (std::size_t p = 0; p < out.plane(); ++p) s[o * out.plane() + p] += b;
      }
    }
  }
  return out;
}

Tensor ConvTranspose2d::forward(const Tensor& x, const Context&) {
  input_ = x;
  return apply(x);
}

Tensor ConvTranspose2d::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  const Geometry g{out_, grad_out.h, grad_out.w, kernel_, stride_, pad_, x.h, x.w};
  const int rows = out_ * kernel_ * kernel_;
  const int cols = x.h * x.w;
  Tensor grad_in(x.n, x.c, x.h, x.w);
  std::vector<double> dcol(static_cast<std::size_t>(rows) * cols);
  const ConstMatrixMap w(weight_.value.data.data(), in_, rows);
  MatrixMap dw(weight_.grad.data.data(), in_, rows);
  for (int i = 0; i < x.n; ++i) {
    im2col(grad_out.sample(i).data(), g, dcol.data());
    const ConstMatrixMap dc(dcol.data(), rows, cols);
    const ConstMatrixMap xi(x.sample(i).data(), in_, cols);
    dw.noalias() += xi * dc.transpose();
    MatrixMap dx(grad_in.sample(i).data(), in_, cols);
    dx.noalias() = w * dc;
    if (has_bias_) {
      auto s = grad_out.sample(i);
      for (int o = 0; o < out_; ++o) {
        double acc = 0;
        for (std::size_t p = 0; p < grad_out.plane(); ++p) acc += s[o * grad_out.plane() + p];
        bias_.grad.data[static_cast<std::size_t>(o)] += acc;
      }
    }
  }
  return grad_in;
}

void ConvTranspose2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

void ConvTranspose2d::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels)
    : channels_(channels), gamma_(make_param(name + ".gamma", 1, channels, 1, 1)),
      beta_(make_param(name + ".beta", 1, channels, 1, 1)) {
  gamma_.value.fill(1.0);
}

Tensor BatchNorm2d::normalize(const Tensor& x, Tensor* xhat, std::vector<double>* inv_std) const {
  if (x.c != channels_) fail(ErrorCode::ShapeMismatch, "batch norm channel mismatch: " + shape_string(x));
  Tensor out(x.n, x.c, x.h, x.w);
  if (xhat) *xhat = Tensor(x.n, x.c, x.h, x.w);
  if (inv_std) inv_std->assign(static_cast<std::size_t>(channels_), 0.0);
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(x.n) * plane;
  for (int ch = 0; ch < channels_; ++ch) {
    double mean = 0;
    for (int i = 0; i < x.n; ++i) {
      const double* p = x.sample(i).data() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) mean += p[k];
    }
    mean /= count;
    double var = 0;
    for (int i = 0; i < x.n; ++i) {
      const double* p = x.sample(i).data() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) var += (p[k] - mean) * (p[k] - mean);
    }
    var /= count;
    const double istd = 1.0 / std::sqrt(var + kEpsilon);
    if (inv_std) (*inv_std)[static_cast<std::size_t>(ch)] = istd;
    const double gamma = gamma_.value.data[static_cast<std::size_t>(ch)];
    const double beta = beta_.value.data[static_cast<std::size_t>(ch)];
    for (int i = 0; i < x.n; ++i) {
      const double* p = x.sample(i).data() + ch * plane;
      double* o = out.sample(i).data() + ch * plane;
      double* hat = xhat ? xhat->sample(i).data() + ch * plane : nullptr;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = (p[k] - mean) * istd;
        if (hat) hat[k] = v;
        o[k] = gamma * v + beta;
      }
    }
  }
  return out;
}

Tensor BatchNorm2d::apply(const Tensor& x) const { return normalize(x, nullptr, nullptr); }

Tensor BatchNorm2d::forward(const Tensor& x, const Context&) { return normalize(x, &xhat_, &inv_std_); }

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  Tensor grad_in(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  const std::size_t plane = grad_out.plane();
  const double count = static_cast<double>(grad_out.n) * plane;
  for (int ch = 0; ch < channels_; ++ch) {
    double sum_dy = 0;
    double sum_dy_xhat = 0;
    for (int i = 0; i < grad_out.n; ++i) {
      const double* dy = grad_out.sample(i).data() + ch * plane;
      const double* hat = xhat_.sample(i).data() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sum_dy += dy[k];
        sum_dy_xhat += dy[k] * hat[k];
      }
    }
    beta_.grad.data[static_cast<std::size_t>(ch)] += sum_dy;
    gamma_.grad.data[static_cast<std::size_t>(ch)] += sum_dy_xhat;
    const double scale = gamma_.value.data[static_cast<std::size_t>(ch)] * inv_std_[static_cast<std::size_t>(ch)] / count;
    for (int i = 0; i < grad_out.n; ++i) {
      const double* dy = grad_out.sample(i).data() + ch * plane;
      const double* hat = xhat_.sample(i).data() + ch * plane;
      double* dx = grad_in.sample(i).data() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) dx[k] = scale * (count * dy[k] - sum_dy - hat[k] * sum_dy_xhat);
    }
  }
  return grad_in;
}

void BatchNorm2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm2d::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ------------------------------------------------------------ Activation

Tensor Activation::apply(const Tensor& x) const {
  Tensor out = x;
  for (double& v : out.data) {
    switch (kind_) {
      case ActivationKind::LeakyRelu: v = v > 0 ? v : slope_ * v; break;
      case ActivationKind::Relu: v = v > 0 ? v : 0.0; break;
      case ActivationKind::Tanh: v = std::tanh(v); break;
      case ActivationKind::Sigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
    }
  }
  return out;
}

Tensor Activation::forward(const Tensor& x, const Context&) {
  Tensor out = apply(x);
  const bool keep_output = kind_ == ActivationKind::Tanh || kind_ == ActivationKind::Sigmoid;
  cached_ = keep_output ? out : x;
  return out;
}

Tensor Activation::backward(const Tensor& grad_out) {
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.size(); ++i) {
    const double c = cached_.data[i];
    switch (kind_) {
      case ActivationKind::LeakyRelu: grad_in.data[i] *= c > 0 ? 1.0 : slope_; break;
      case ActivationKind::Relu: grad_in.data[i] *= c > 0 ? 1.0 : 0.0; break;
      case ActivationKind::Tanh: grad_in.data[i] *= 1.0 - c * c; break;
      case ActivationKind::Sigmoid: grad_in.data[i] *= c * (1.0 - c); break;
    }
  }
  return grad_in;
}

// --------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, const Context& ctx) {
  if (!ctx.training) {
    scale_.assign(x.size(), 1.0);
    return x;
  }
  if (!ctx.rng) fail(ErrorCode::InvalidConfig, "dropout in training mode needs an rng");
  scale_.resize(x.size());
  Tensor out = x;
  const double keep = 1.0 / (1.0 - rate_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale_[i] = unit_uniform(*ctx.rng) < rate_ ? 0.0 : keep;
    out.data[i] *= scale_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in.data[i] *= scale_[i];
  return grad_in;
}

// ------------------------------------------------------------ Sequential

Tensor Sequential::forward(Tensor x, const Context& ctx) {
  for (auto& layer : layers_) {
    x = std::visit([&](auto& l) { return l.forward(x, ctx); }, layer);
  }
  return x;
}

Tensor Sequential::apply(Tensor x) const {
  for (const auto& layer : layers_) {
    x = std::visit([&](const auto& l) { return l.apply(x); }, layer);
  }
  return x;
}

Tensor Sequential::backward(Tensor grad) {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    grad = std::visit([&](auto& l) { return l.backward(grad); }, *it);
  }
  return grad;
}

void Sequential::collect(std::vector<Parameter*>& out) {
  for (auto& layer : layers_) std::visit([&](auto& l) { l.collect(out); }, layer);
}

void Sequential::collect(std::vector<const Parameter*>& out) const {
  for (const auto& layer : layers_) std::visit([&](const auto& l) { l.collect(out); }, layer);
}

// ---------------------------------------------------------------- random

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  double u1 = unit_uniform(rng);
  while (u1 <= 0.0) u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void initialize(std::span<Parameter* const> params, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (Parameter* p : params) {
    if (ends_with(p->name, ".weight")) {
      for (double& v : p->value.data) v = stddev * standard_normal(rng);
    } else if (ends_with(p->name, ".gamma")) {
      for (double& v : p->value.data) v = 1.0 + stddev * standard_normal(rng);
    } else {
      p->value.fill(0.0);
    }
    p->grad = Tensor(p->value.n, p->value.c, p->value.h, p->value.w);
  }
}

}  // namespace detaug::nn
