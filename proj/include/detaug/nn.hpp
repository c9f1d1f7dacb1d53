#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace detaug::nn {

// Dense NCHW tensor of doubles.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  bool same_shape(const Tensor& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }
  double& at(int ni, int ci, int y, int x) {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  double at(int ni, int ci, int y, int x) const {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  std::span<double> sample(int ni) {
    return {data.data() + static_cast<std::size_t>(ni) * c * plane(), static_cast<std::size_t>(c) * plane()};
  }
  std::span<const double> sample(int ni) const {
    return {data.data() + static_cast<std::size_t>(ni) * c * plane(), static_cast<std::size_t>(c) * plane()};
  }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

std::string shape_string(const Tensor& t);

// Channel-wise concatenation [a; b] and its split.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& ab, int a_channels, Tensor& a, Tensor& b);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

struct Context {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout masks; required when training
};

// Layers cache what backward needs during forward(); apply() is the
// cache-free, const inference path used by concurrent readers.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad, bool bias);

  Tensor forward(const Tensor& x, const Context& ctx);
  Tensor apply(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
  int out_size(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_ = 0, out_ = 0, kernel_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  Parameter weight_;  // [out, in, k, k]
  Parameter bias_;    // [1, out, 1, 1]
  Tensor input_;
  std::vector<std::vector<double>> cols_;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad, bool bias);

  Tensor forward(const Tensor& x, const Context& ctx);
  Tensor apply(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
  int out_size(int in) const { return (in - 1) * stride_ - 2 * pad_ + kernel_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_ = 0, out_ = 0, kernel_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  Parameter weight_;  // [in, out, k, k]
  Parameter bias_;
  Tensor input_;
};

// Normalizes with statistics of the current batch in every mode.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels);

  Tensor forward(const Tensor& x, const Context& ctx);
  Tensor apply(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;

  static constexpr double kEpsilon = 1e-5;

 private:
  Tensor normalize(const Tensor& x, Tensor* xhat, std::vector<double>* inv_std) const;

  int channels_ = 0;
  Parameter gamma_;
  Parameter beta_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

enum class ActivationKind { LeakyRelu, Relu, Tanh, Sigmoid };

class Activation {
 public:
  Activation() = default;
  explicit Activation(ActivationKind kind, double slope = 0.2) : kind_(kind), slope_(slope) {}

  Tensor forward(const Tensor& x, const Context& ctx);
  Tensor apply(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Parameter*>&) {}
  void collect(std::vector<const Parameter*>&) const {}

 private:
  ActivationKind kind_ = ActivationKind::Relu;
  double slope_ = 0.2;
  Tensor cached_;  // input for piecewise-linear kinds, output for tanh/sigmoid
};

// Inverted dropout; identity outside training.
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate) : rate_(rate) {}

  Tensor forward(const Tensor& x, const Context& ctx);
  Tensor apply(const Tensor& x) const { return x; }
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Parameter*>&) {}
  void collect(std::vector<const Parameter*>&) const {}

 private:
  double rate_ = 0.5;
  std::vector<double> scale_;
};

using Layer = std::variant<Conv2d, ConvTranspose2d, BatchNorm2d, Activation, Dropout>;

// Straight-line chain of layers.
class Sequential {
 public:
  void add(Layer layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(Tensor x, const Context& ctx);
  Tensor apply(Tensor x) const;
  Tensor backward(Tensor grad);
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

// Normal(0, std) initialisation of conv weights; BN gamma ~ N(1, std), beta = 0; biases 0.
void initialize(std::span<Parameter* const> params, std::uint64_t seed, double stddev = 0.02);

// Standard normal from raw engine bits (Box-Muller), identical across standard libraries.
double standard_normal(std::mt19937_64& rng);
double unit_uniform(std::mt19937_64& rng);

}  // namespace detaug::nn
