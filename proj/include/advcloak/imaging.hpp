#pragma once
// Deterministic image primitives. Pixels are stored interleaved (row, column,
// channel) as doubles; images live in [0,1], perturbations in [-1,1].

#include <cstddef>
#include <vector>

namespace advcloak {

struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int h, int w, int c, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }
  bool same_shape(const Raster& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Raster&) const = default;
};

struct Image : Raster {
  using Raster::Raster;
  bool operator==(const Image&) const = default;
};

struct Perturbation : Raster {
  using Raster::Raster;
  bool operator==(const Perturbation&) const = default;
};

struct SsimParams {
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const;
};

// Throws InvalidArgument when channels is not 1 or 3, the buffer size is
// wrong, or a pixel leaves [0,1].
void validate_image(const Image& image);

// clamp(image + delta, 0, 1) elementwise.
Image apply_perturbation(const Image& image, const Perturbation& delta);

// Mean structural similarity over all valid window positions, computed per
// channel and averaged across channels.
double ssim(const Image& a, const Image& b, const SsimParams& p = {});

struct SsimGradient {
  double value = 0.0;
  std::vector<double> grad_b;  // d ssim / d b, same layout as b
};
SsimGradient ssim_with_gradient(const Image& a, const Image& b, const SsimParams& p = {});

// (1 - ssim) / 2
double dssim(const Image& a, const Image& b, const SsimParams& p = {});

// Normalized sampled Gaussian of odd length.
std::vector<double> gaussian_kernel_1d(double sigma, int size);

// Separable Gaussian blur with half-sample symmetric reflection at borders.
Image gaussian_blur(const Image& image, double sigma = 1.0, int kernel_size = 5);

// Bilinear resampling with corner alignment (first/last samples map onto the
// first/last source pixels). A target extent of 1 samples the source centre.
Image resize_bilinear(const Image& image, int new_h, int new_w);

double linf_norm(const Perturbation& delta);

// Clamps every element into [-t, t].
Perturbation project_linf(const Perturbation& delta, double t);

// a - b, elementwise, for rasters of equal shape.
Perturbation signed_difference(const Image& a, const Image& b);

}  // namespace advcloak
