#pragma once
// Minimal layer library with explicit backward passes.
//
// forward() caches whatever its backward() needs; infer() is the read-only
// evaluation path (running statistics, no caching) and is safe to call
// concurrently. Per-sample computation never depends on the other samples in
// the batch outside of training-mode batch normalization, so batched and
// single-image inference agree bit for bit.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/tensor.hpp"

namespace advcloak::nn {

using Rng = std::mt19937_64;

enum class Mode {
  kTrain,  // batch statistics, running-stat updates, caches for backward
  kEval,   // running statistics, caches for backward
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor infer(const Tensor& x) const = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual nlohmann::json describe() const { return {{"kind", kind()}}; }

  // Trainable parameters.
  virtual std::vector<Param*> params() { return {}; }
  // Persisted non-trainable state (batch-norm running statistics).
  virtual std::vector<Tensor*> buffers() { return {}; }

  std::vector<const Param*> params() const;
  std::vector<const Tensor*> buffers() const;
  std::int64_t parameter_count() const;

  // Frozen layers still propagate input gradients but skip parameter gradients.
  bool frozen = false;
};

class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng);

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  nlohmann::json describe() const override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

  void scale_weights(float s);
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  void im2col(const float* x, int h, int w, float* col) const;
  void col2im(const float* col, int h, int w, float* x) const;

  int in_, out_, kernel_, stride_, pad_;
  Param weight_;  // [out, in * k * k]
  Param bias_;    // [out]
  Tensor input_;
};

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int channels, float momentum = 0.1f, float eps = 1e-5f);

  std::string kind() const override { return "batchnorm2d"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm2d>(*this); }
  nlohmann::json describe() const override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }

 private:
  int channels_;
  float momentum_, eps_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  // backward cache
  Mode cached_mode_ = Mode::kEval;
  Tensor x_hat_;
  std::vector<float> inv_std_;
};

class ReLU final : public Layer {
 public:
  explicit ReLU(float negative_slope = 0.0f) : slope_(negative_slope) {}
  std::string kind() const override { return slope_ == 0.0f ? "relu" : "leaky_relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
  nlohmann::json describe() const override;

 private:
  float slope_;
  Tensor input_;
};

class Tanh final : public Layer {
 public:
  std::string kind() const override { return "tanh"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Tanh>(*this); }

 private:
  Tensor output_;
};

class MaxPool2 final : public Layer {
 public:
  std::string kind() const override { return "maxpool2"; }
  Shape output_shape(const Shape& in) const override { return {in.n, in.c, in.h / 2, in.w / 2}; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }

 private:
  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;
};

// Nearest-neighbour x2 upsampling.
class Upsample2 final : public Layer {
 public:
  std::string kind() const override { return "upsample_nearest2"; }
  Shape output_shape(const Shape& in) const override { return {in.n, in.c, in.h * 2, in.w * 2}; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Upsample2>(*this); }
};

class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  Shape output_shape(const Shape& in) const override { return {in.n, in.c, 1, 1}; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  Shape in_shape_;
};

// Fully connected; flattens C*H*W of the input. Output is [N, out, 1, 1].
class Dense final : public Layer {
 public:
  Dense(int in_features, int out_features, Rng& rng);

  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override { return {in.n, out_, 1, 1}; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  nlohmann::json describe() const override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

 private:
  int in_, out_;
  Param weight_;  // [out, in]
  Param bias_;
  Tensor input_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);
  Shape output_shape(const Shape& in) const;

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::vector<Tensor*> buffers();
  std::vector<const Tensor*> buffers() const;
  std::int64_t parameter_count() const;
  void set_frozen(bool frozen);

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  nlohmann::json describe() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamSettings settings);

  // Applies one update from the accumulated gradients and zeroes them.
  void step();
  void zero_grad();
  std::int64_t steps() const { return steps_; }
  const AdamSettings& settings() const { return settings_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  AdamSettings settings_;
  std::int64_t steps_ = 0;
};

void zero_grad(const std::vector<Param*>& params);

// Mean softmax cross-entropy of logits [N, K, 1, 1] against integer labels.
// Writes d(loss)/d(logits) into grad.
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor& grad);

}  // namespace advcloak::nn
