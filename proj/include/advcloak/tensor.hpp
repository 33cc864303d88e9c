#pragma once
// NCHW float tensor used by the network layers.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace advcloak {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), values_(shape.size(), fill) {}
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> span() { return values_; }
  std::span<const float> span() const { return values_; }
  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  std::span<float> sample(int i) {
    return std::span<float>(values_).subspan(i * shape_.sample_size(), shape_.sample_size());
  }
  std::span<const float> sample(int i) const {
    return std::span<const float>(values_).subspan(i * shape_.sample_size(),
                                                   shape_.sample_size());
  }

  float& at(int ni, int ci, int hi, int wi) {
    return values_[((static_cast<std::size_t>(ni) * shape_.c + ci) * shape_.h + hi) * shape_.w + wi];
  }
  float at(int ni, int ci, int hi, int wi) const {
    return values_[((static_cast<std::size_t>(ni) * shape_.c + ci) * shape_.h + hi) * shape_.w + wi];
  }

  void fill(float v);
  // Same storage viewed with another shape of equal size.
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_{};
  std::vector<float> values_;
};

// Concatenates along the channel axis. Batch and spatial sizes must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Inverse of concat_channels for gradients: first `c_first` channels go to `a`.
void split_channels(const Tensor& x, int c_first, Tensor& a, Tensor& b);

}  // namespace advcloak
