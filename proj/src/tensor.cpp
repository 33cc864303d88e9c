#include "advcloak/tensor.hpp"

#include <algorithm>

#include "advcloak/errors.hpp"

namespace advcloak {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

void Tensor::fill(float v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.size() != size()) throw InvalidArgument("reshape size mismatch " + shape.str());
  Tensor out = *this;
  out.shape_ = shape;
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw InvalidArgument("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    auto dst = out.sample(i);
    auto sa = a.sample(i);
    auto sb = b.sample(i);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<std::ptrdiff_t>(sa.size()));
  }
  return out;
}

void split_channels(const Tensor& x, int c_first, Tensor& a, Tensor& b) {
  a = Tensor(x.n(), c_first, x.h(), x.w());
  b = Tensor(x.n(), x.c() - c_first, x.h(), x.w());
  for (int i = 0; i < x.n(); ++i) {
    auto src = x.sample(i);
    auto da = a.sample(i);
    auto db = b.sample(i);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(da.size()), da.begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(da.size()), src.end(), db.begin());
  }
}

}  // namespace advcloak
