#include "advcloak/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advcloak/errors.hpp"
#include "advcloak/kernels.hpp"

namespace advcloak::nn {

std::vector<const Param*> Layer::params() const {
  auto mutable_params = const_cast<Layer*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<const Tensor*> Layer::buffers() const {
  auto mutable_buffers = const_cast<Layer*>(this)->buffers();
  return {mutable_buffers.begin(), mutable_buffers.end()};
}

std::int64_t Layer::parameter_count() const {
  std::int64_t total = 0;
  for (const Param* p : params()) total += static_cast<std::int64_t>(p->value.size());
  return total;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad) {
  if (in_ < 1 || out_ < 1 || kernel_ < 1 || stride_ < 1 || pad_ < 0) {
    throw InvalidArgument("conv2d: invalid geometry");
  }
  const int fan_in = in_ * kernel_ * kernel_;
  weight_ = {"weight", Tensor(out_, fan_in, 1, 1), Tensor(out_, fan_in, 1, 1)};
  bias_ = {"bias", Tensor(out_, 1, 1, 1), Tensor(out_, 1, 1, 1)};
  std::normal_distribution<float> normal(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (float& v : weight_.value.values()) v = normal(rng);
}

Shape Conv2d::output_shape(const Shape& in) const {
  if (in.c != in_) {
    throw InvalidArgument("conv2d expects " + std::to_string(in_) + " channels, got " + in.str());
  }
  const int oh = (in.h + 2 * pad_ - kernel_) / stride_ + 1;
  const int ow = (in.w + 2 * pad_ - kernel_) / stride_ + 1;
  if (oh < 1 || ow < 1) throw InvalidArgument("conv2d: input too small " + in.str());
  return {in.n, out_, oh, ow};
}

nlohmann::json Conv2d::describe() const {
  return {{"kind", kind()}, {"in", in_}, {"out", out_}, {"kernel", kernel_},
          {"stride", stride_}, {"pad", pad_}};
}

void Conv2d::scale_weights(float s) {
  for (float& v : weight_.value.values()) v *= s;
  for (float& v : bias_.value.values()) v *= s;
}

void Conv2d::im2col(const float* x, int h, int w, float* col) const {
  const int oh = (h + 2 * pad_ - kernel_) / stride_ + 1;
  const int ow = (w + 2 * pad_ - kernel_) / stride_ + 1;
  const int positions = oh * ow;
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        float* row = col + static_cast<std::ptrdiff_t>((c * kernel_ + ky) * kernel_ + kx) * positions;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          float* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          const float* src = x + (static_cast<std::ptrdiff_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const float* col, int h, int w, float* x) const {
  const int oh = (h + 2 * pad_ - kernel_) / stride_ + 1;
  const int ow = (w + 2 * pad_ - kernel_) / stride_ + 1;
  const int positions = oh * ow;
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const float* row =
            col + static_cast<std::ptrdiff_t>((c * kernel_ + ky) * kernel_ + kx) * positions;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) continue;
          float* dst = x + (static_cast<std::ptrdiff_t>(c) * h + iy) * w;
          const float* src = row + oy * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor Conv2d::infer(const Tensor& x) const {
  const Shape os = output_shape(x.shape());
  const int positions = os.h * os.w;
  const int fan_in = in_ * kernel_ * kernel_;
  Tensor out(os);
  std::vector<float> col(static_cast<std::size_t>(fan_in) * positions);
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.sample(i).data(), x.h(), x.w(), col.data());
    float* o = out.sample(i).data();
    for (int co = 0; co < out_; ++co) {
      std::fill(o + static_cast<std::ptrdiff_t>(co) * positions,
                o + static_cast<std::ptrdiff_t>(co + 1) * positions, bias_.value.data()[co]);
    }
    kernels::gemm_accumulate(out_, positions, fan_in, weight_.value.data(), fan_in, col.data(),
                             positions, o, positions);
  }
  return out;
}

Tensor Conv2d::forward(const Tensor& x, Mode /*mode*/) {
  input_ = x;
  return infer(x);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Shape& is = input_.shape();
  const int positions = grad_out.h() * grad_out.w();
  const int fan_in = in_ * kernel_ * kernel_;
  Tensor grad_in(is);
  std::vector<float> col(static_cast<std::size_t>(fan_in) * positions);
  std::vector<float> col_t(col.size());
  std::vector<float> weight_t(static_cast<std::size_t>(fan_in) * out_);
  const float* wv = weight_.value.data();
  for (int co = 0; co < out_; ++co) {
    for (int k = 0; k < fan_in; ++k) weight_t[static_cast<std::size_t>(k) * out_ + co] = wv[co * fan_in + k];
  }
  for (int i = 0; i < is.n; ++i) {
    const float* g = grad_out.sample(i).data();
    if (!frozen) {
      im2col(input_.sample(i).data(), is.h, is.w, col.data());
      for (int k = 0; k < fan_in; ++k) {
        for (int p = 0; p < positions; ++p) {
          col_t[static_cast<std::size_t>(p) * fan_in + k] = col[static_cast<std::size_t>(k) * positions + p];
        }
      }
      kernels::gemm_accumulate(out_, fan_in, positions, g, positions, col_t.data(), fan_in,
                               weight_.grad.data(), fan_in);
      float* gb = bias_.grad.data();
      for (int co = 0; co < out_; ++co) {
        double s = 0.0;
        const float* row = g + static_cast<std::ptrdiff_t>(co) * positions;
        for (int p = 0; p < positions; ++p) s += row[p];
        gb[co] += static_cast<float>(s);
      }
    }
    std::fill(col.begin(), col.end(), 0.0f);
    kernels::gemm_accumulate(fan_in, positions, out_, weight_t.data(), out_, g, positions,
                             col.data(), positions);
    col2im(col.data(), is.h, is.w, grad_in.sample(i).data());
  }
  return grad_in;
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = {"gamma", Tensor(channels, 1, 1, 1, 1.0f), Tensor(channels, 1, 1, 1)};
  beta_ = {"beta", Tensor(channels, 1, 1, 1), Tensor(channels, 1, 1, 1)};
  running_mean_ = Tensor(channels, 1, 1, 1, 0.0f);
  running_var_ = Tensor(channels, 1, 1, 1, 1.0f);
}

nlohmann::json BatchNorm2d::describe() const {
  return {{"kind", kind()}, {"channels", channels_}, {"momentum", momentum_}, {"eps", eps_}};
}

Tensor BatchNorm2d::infer(const Tensor& x) const {
  if (x.c() != channels_) throw InvalidArgument("batchnorm2d channel mismatch " + x.shape().str());
  Tensor out(x.shape());
  const int spatial = x.h() * x.w();
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < channels_; ++c) {
      const float inv_std = 1.0f / std::sqrt(running_var_.data()[c] + eps_);
      const float scale = gamma_.value.data()[c] * inv_std;
      const float shift = beta_.value.data()[c] - running_mean_.data()[c] * scale;
      const float* src = x.data() + (static_cast<std::ptrdiff_t>(i) * channels_ + c) * spatial;
      float* dst = out.data() + (static_cast<std::ptrdiff_t>(i) * channels_ + c) * spatial;
      for (int p = 0; p < spatial; ++p) dst[p] = src[p] * scale + shift;
    }
  }
  return out;
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  if (x.c() != channels_) throw InvalidArgument("batchnorm2d channel mismatch " + x.shape().str());
  cached_mode_ = mode;
  const int spatial = x.h() * x.w();
  const std::size_t count = static_cast<std::size_t>(x.n()) * spatial;
  x_hat_ = Tensor(x.shape());
  inv_std_.assign(channels_, 0.0f);
  Tensor out(x.shape());
  for (int c = 0; c < channels_; ++c) {
    float mean, var;
    if (mode == Mode::kTrain) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < x.n(); ++i) {
        const float* src = x.data() + (static_cast<std::ptrdiff_t>(i) * channels_ + c) * spatial;
        for (int p = 0; p < spatial; ++p) s += src[p];
      }
      const double m = s / static_cast<double>(count);
      for (int i = 0; i < x.n(); ++i) {
        const float* src = x.data() + (static_cast<std::ptrdiff_t>(i) * channels_ + c) * spatial;
        for (int p = 0; p < spatial; ++p) {
          const double d = src[p] - m;
          s2 += d * d;
        }
      }
      mean = static_cast<float>(m);
      var = static_cast<float>(s2 / static_cast<double>(count));
      running_mean_.data()[c] = (1.0f - momentum_) * running_mean_.data()[c] + momentum_ * mean;
      running_var_.data()[c] = (1.0f - momentum_) * running_var_.data()[c] + momentum_ * var;
    } else {
      mean = running_mean_.data()[c];
      var = running_var_.data()[c];
    }
    const float inv_std = 1.0f / std::sqrt(var + eps_);
    inv_std_[c] = inv_std;
    const float g = gamma_.value.data()[c];
    const float b = beta_.value.data()[c];
    for (int i = 0; i < x.n(); ++i) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(i) * channels_ + c) * spatial;
      for (int p = 0; p < spatial; ++p) {
        const float xh = (x.data()[off + p] - mean) * inv_std;
        x_hat_.data()[off + p] = xh;
        out.data()[off + p] = g * xh + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  const int spatial = grad_out.h() * grad_out.w();
  const double count = static_cast<double>(grad_out.n()) * spatial;
  Tensor grad_in(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int i = 0; i < grad_out.n(); ++i) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(i) * channels_ + c) * spatial;
      for (int p = 0; p < spatial; ++p) {
        sum_g += grad_out.data()[off + p];
        sum_gx += static_cast<double>(grad_out.data()[off + p]) * x_hat_.data()[off + p];
      }
    }
    if (!frozen) {
      gamma_.grad.data()[c] += static_cast<float>(sum_gx);
      beta_.grad.data()[c] += static_cast<float>(sum_g);
    }
    const float scale = gamma_.value.data()[c] * inv_std_[c];
    const float mean_g = static_cast<float>(sum_g / count);
    const float mean_gx = static_cast<float>(sum_gx / count);
    for (int i = 0; i < grad_out.n(); ++i) {
      const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(i) * channels_ + c) * spatial;
      for (int p = 0; p < spatial; ++p) {
        const float g = grad_out.data()[off + p];
        grad_in.data()[off + p] =
            cached_mode_ == Mode::kTrain
                ? scale * (g - mean_g - x_hat_.data()[off + p] * mean_gx)
                : scale * g;
      }
    }
  }
  return grad_in;
}

// ------------------------------------------------------------ activations

nlohmann::json ReLU::describe() const {
  return {{"kind", kind()}, {"negative_slope", slope_}};
}

Tensor ReLU::infer(const Tensor& x) const {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = x.data()[i];
    out.data()[i] = v > 0.0f ? v : slope_ * v;
  }
  return out;
}

Tensor ReLU::forward(const Tensor& x, Mode) {
  input_ = x;
  return infer(x);
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data()[i] = input_.data()[i] > 0.0f ? grad_out.data()[i] : slope_ * grad_out.data()[i];
  }
  return g;
}

Tensor Tanh::infer(const Tensor& x) const {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  return out;
}

Tensor Tanh::forward(const Tensor& x, Mode) {
  output_ = infer(x);
  return output_;
}

Tensor Tanh::backward(const Tensor& grad_out) {
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const float y = output_.data()[i];
    g.data()[i] = grad_out.data()[i] * (1.0f - y * y);
  }
  return g;
}

// ---------------------------------------------------------------- pooling

Tensor MaxPool2::infer(const Tensor& x) const {
  const Shape os = output_shape(x.shape());
  Tensor out(os);
  for (int i = 0; i < os.n; ++i) {
    for (int c = 0; c < os.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) {
          float best = -std::numeric_limits<float>::infinity();
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) best = std::max(best, x.at(i, c, 2 * y + dy, 2 * xx + dx));
          }
          out.at(i, c, y, xx) = best;
        }
      }
    }
  }
  return out;
}

Tensor MaxPool2::forward(const Tensor& x, Mode) {
  in_shape_ = x.shape();
  const Shape os = output_shape(x.shape());
  Tensor out(os);
  argmax_.assign(out.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < os.n; ++i) {
    for (int c = 0; c < os.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::uint32_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int iy = 2 * y + dy, ix = 2 * xx + dx;
              const float v = x.at(i, c, iy, ix);
              if (v > best) {
                best = v;
                best_idx = static_cast<std::uint32_t>(
                    ((static_cast<std::size_t>(i) * x.c() + c) * x.h() + iy) * x.w() + ix);
              }
            }
          }
          out.data()[o] = best;
          argmax_[o] = best_idx;
        }
      }
    }
  }
  return out;
}

Tensor MaxPool2::backward(const Tensor& grad_out) {
  Tensor g(in_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g.data()[argmax_[o]] += grad_out.data()[o];
  return g;
}

Tensor Upsample2::infer(const Tensor& x) const {
  Tensor out(output_shape(x.shape()));
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < out.h(); ++y) {
        for (int xx = 0; xx < out.w(); ++xx) out.at(i, c, y, xx) = x.at(i, c, y / 2, xx / 2);
      }
    }
  }
  return out;
}

Tensor Upsample2::forward(const Tensor& x, Mode) { return infer(x); }

Tensor Upsample2::backward(const Tensor& grad_out) {
  Tensor g(grad_out.n(), grad_out.c(), grad_out.h() / 2, grad_out.w() / 2);
  for (int i = 0; i < grad_out.n(); ++i) {
    for (int c = 0; c < grad_out.c(); ++c) {
      for (int y = 0; y < grad_out.h(); ++y) {
        for (int xx = 0; xx < grad_out.w(); ++xx) g.at(i, c, y / 2, xx / 2) += grad_out.at(i, c, y, xx);
      }
    }
  }
  return g;
}

Tensor GlobalAvgPool::infer(const Tensor& x) const {
  Tensor out(x.n(), x.c(), 1, 1);
  const int spatial = x.h() * x.w();
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.data() + (static_cast<std::ptrdiff_t>(i) * x.c() + c) * spatial;
      double s = 0.0;
      for (int p = 0; p < spatial; ++p) s += src[p];
      out.at(i, c, 0, 0) = static_cast<float>(s / spatial);
    }
  }
  return out;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  in_shape_ = x.shape();
  return infer(x);
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor g(in_shape_);
  const int spatial = in_shape_.h * in_shape_.w;
  const float inv = 1.0f / static_cast<float>(spatial);
  for (int i = 0; i < in_shape_.n; ++i) {
    for (int c = 0; c < in_shape_.c; ++c) {
      float* dst = g.data() + (static_cast<std::ptrdiff_t>(i) * in_shape_.c + c) * spatial;
      std::fill(dst, dst + spatial, grad_out.at(i, c, 0, 0) * inv);
    }
  }
  return g;
}

// ------------------------------------------------------------------ Dense

Dense::Dense(int in_features, int out_features, Rng& rng) : in_(in_features), out_(out_features) {
  if (in_ < 1 || out_ < 1) throw InvalidArgument("dense: invalid size");
  weight_ = {"weight", Tensor(out_, in_, 1, 1), Tensor(out_, in_, 1, 1)};
  bias_ = {"bias", Tensor(out_, 1, 1, 1), Tensor(out_, 1, 1, 1)};
  std::normal_distribution<float> normal(0.0f, std::sqrt(1.0f / static_cast<float>(in_)));
  for (float& v : weight_.value.values()) v = normal(rng);
}

nlohmann::json Dense::describe() const {
  return {{"kind", kind()}, {"in", in_}, {"out", out_}};
}

Tensor Dense::infer(const Tensor& x) const {
  if (static_cast<int>(x.shape().sample_size()) != in_) {
    throw InvalidArgument("dense expects " + std::to_string(in_) + " features, got " + x.shape().str());
  }
  Tensor out(x.n(), out_, 1, 1);
  auto w = weight_.value.span();
  for (int i = 0; i < x.n(); ++i) {
    auto xi = x.sample(i);
    for (int o = 0; o < out_; ++o) {
      out.data()[static_cast<std::size_t>(i) * out_ + o] =
          kernels::dot(w.subspan(static_cast<std::size_t>(o) * in_, in_), xi) + bias_.value.data()[o];
    }
  }
  return out;
}

Tensor Dense::forward(const Tensor& x, Mode) {
  input_ = x;
  return infer(x);
}

Tensor Dense::backward(const Tensor& grad_out) {
  Tensor g(input_.shape());
  auto w = weight_.value.span();
  auto gw = weight_.grad.span();
  for (int i = 0; i < input_.n(); ++i) {
    auto xi = input_.sample(i);
    auto gi = g.sample(i);
    for (int o = 0; o < out_; ++o) {
      const float go = grad_out.data()[static_cast<std::size_t>(i) * out_ + o];
      if (go == 0.0f) continue;
      if (!frozen) {
        kernels::axpy(go, xi, gw.subspan(static_cast<std::size_t>(o) * in_, in_));
        bias_.grad.data()[o] += go;
      }
      kernels::axpy(go, w.subspan(static_cast<std::size_t>(o) * in_, in_), gi);
    }
  }
  return g;
}

// ------------------------------------------------------------- Sequential

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

Tensor Sequential::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) h = l->infer(h);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Shape Sequential::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    auto p = l->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const Param*> Sequential::params() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_) {
    auto p = static_cast<const Layer&>(*l).params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Tensor*> Sequential::buffers() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    auto b = l->buffers();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<const Tensor*> Sequential::buffers() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    auto b = static_cast<const Layer&>(*l).buffers();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::int64_t Sequential::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& l : layers_) total += l->parameter_count();
  return total;
}

void Sequential::set_frozen(bool frozen) {
  for (auto& l : layers_) l->frozen = frozen;
}

nlohmann::json Sequential::describe() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers_) arr.push_back(l->describe());
  return arr;
}

// ------------------------------------------------------------------- Adam

Adam::Adam(std::vector<Param*> params, AdamSettings settings)
    : params_(std::move(params)), settings_(settings) {
  if (!(settings_.lr > 0.0)) throw InvalidArgument("adam: learning rate must be positive");
  for (Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++steps_;
  kernels::AdamCoeffs c;
  c.lr = static_cast<float>(settings_.lr);
  c.beta1 = static_cast<float>(settings_.beta1);
  c.beta2 = static_cast<float>(settings_.beta2);
  c.eps = static_cast<float>(settings_.eps);
  c.bias_correction1 = static_cast<float>(1.0 - std::pow(settings_.beta1, static_cast<double>(steps_)));
  c.bias_correction2 = static_cast<float>(1.0 - std::pow(settings_.beta2, static_cast<double>(steps_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    kernels::adam_update(params_[i]->value.span(), params_[i]->grad.span(), m_[i].span(),
                         v_[i].span(), c);
  }
  zero_grad();
}

void Adam::zero_grad() { nn::zero_grad(params_); }

void zero_grad(const std::vector<Param*>& params) {
  for (Param* p : params) p->grad.fill(0.0f);
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor& grad) {
  const int n = logits.n();
  const int k = static_cast<int>(logits.shape().sample_size());
  if (static_cast<int>(labels.size()) != n) throw InvalidArgument("cross entropy: label count");
  grad = Tensor(logits.shape());
  double total = 0.0;
  std::vector<double> p(k);
  for (int i = 0; i < n; ++i) {
    const float* z = logits.data() + static_cast<std::size_t>(i) * k;
    double zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, static_cast<double>(z[j]));
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - zmax);
      s += p[j];
    }
    const int y = labels[i];
    if (y < 0 || y >= k) throw InvalidArgument("cross entropy: label out of range");
    total += -(z[y] - zmax - std::log(s));
    for (int j = 0; j < k; ++j) {
      grad.data()[static_cast<std::size_t>(i) * k + j] =
          static_cast<float>((p[j] / s - (j == y ? 1.0 : 0.0)) / n);
    }
  }
  return total / n;
}

}  // namespace advcloak::nn
