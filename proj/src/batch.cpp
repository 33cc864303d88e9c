#include "advcloak/batch.hpp"

#include "advcloak/errors.hpp"

namespace advcloak {
namespace {

template <typename R>
Tensor rasters_to_tensor(std::span<const R> items) {
  if (items.empty()) throw InvalidArgument("to_tensor: empty batch");
  const R& first = items.front();
  Tensor t(static_cast<int>(items.size()), first.channels, first.height, first.width);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const R& r = items[i];
    if (!r.same_shape(first)) throw InvalidArgument("to_tensor: mixed shapes in batch");
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        for (int c = 0; c < r.channels; ++c) {
          t.at(static_cast<int>(i), c, y, x) = static_cast<float>(r.at(y, x, c));
        }
      }
    }
  }
  return t;
}

template <typename R>
R raster_from_tensor(const Tensor& t, int index) {
  R r(t.h(), t.w(), t.c());
  for (int y = 0; y < t.h(); ++y) {
    for (int x = 0; x < t.w(); ++x) {
      for (int c = 0; c < t.c(); ++c) r.at(y, x, c) = t.at(index, c, y, x);
    }
  }
  return r;
}

}  // namespace

Tensor to_tensor(std::span<const Image> images) { return rasters_to_tensor(images); }
Tensor to_tensor(const Image& image) { return rasters_to_tensor(std::span<const Image>(&image, 1)); }
Tensor to_tensor(std::span<const Perturbation> deltas) { return rasters_to_tensor(deltas); }
Image image_from_tensor(const Tensor& t, int index) { return raster_from_tensor<Image>(t, index); }
Perturbation perturbation_from_tensor(const Tensor& t, int index) {
  return raster_from_tensor<Perturbation>(t, index);
}

void add_raster_gradient(Tensor& t, int index, std::span<const double> grad) {
  std::size_t k = 0;
  for (int y = 0; y < t.h(); ++y) {
    for (int x = 0; x < t.w(); ++x) {
      for (int c = 0; c < t.c(); ++c, ++k) t.at(index, c, y, x) += static_cast<float>(grad[k]);
    }
  }
}

}  // namespace advcloak
