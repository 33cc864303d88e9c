#pragma once
// Conversions between interleaved double rasters and NCHW float tensors.

#include <span>
#include <vector>

#include "advcloak/imaging.hpp"
#include "advcloak/tensor.hpp"

namespace advcloak {

Tensor to_tensor(std::span<const Image> images);
Tensor to_tensor(const Image& image);
Tensor to_tensor(std::span<const Perturbation> deltas);
Image image_from_tensor(const Tensor& t, int index);
Perturbation perturbation_from_tensor(const Tensor& t, int index);
// Accumulates a raster-layout gradient into sample `index` of a tensor.
void add_raster_gradient(Tensor& t, int index, std::span<const double> grad);

}  // namespace advcloak
