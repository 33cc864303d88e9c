#include "advcloak/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advcloak/errors.hpp"

namespace advcloak {

Raster::Raster(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      data(static_cast<std::size_t>(std::max(h, 0)) * std::max(w, 0) * std::max(c, 0), fill) {
  if (h < 1 || w < 1 || c < 1) throw InvalidArgument("raster dimensions must be positive");
}

void SsimParams::validate() const {
  if (window_size < 3 || window_size % 2 == 0) {
    throw InvalidArgument("ssim window size must be odd and >= 3");
  }
  if (!(window_sigma > 0.0)) throw InvalidArgument("ssim window sigma must be positive");
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw InvalidArgument("ssim constants must be positive");
  if (!(dynamic_range > 0.0)) throw InvalidArgument("ssim dynamic range must be positive");
}

void validate_image(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw InvalidArgument("image must have 1 or 3 channels");
  }
  if (image.data.size() != static_cast<std::size_t>(image.height) * image.width * image.channels) {
    throw InvalidArgument("image buffer size does not match its shape");
  }
  for (double v : image.data) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("image pixel outside [0,1]");
  }
}

Image apply_perturbation(const Image& image, const Perturbation& delta) {
  if (!image.same_shape(delta)) throw InvalidArgument("apply_perturbation: shape mismatch");
  Image out = image;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::clamp(image.data[i] + delta.data[i], 0.0, 1.0);
  }
  return out;
}

std::vector<double> gaussian_kernel_1d(double sigma, int size) {
  if (size < 1 || size % 2 == 0) throw InvalidArgument("gaussian kernel size must be odd");
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian sigma must be positive");
  const int r = size / 2;
  std::vector<double> k(size);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    s += k[i + r];
  }
  for (double& v : k) v /= s;
  return k;
}

namespace {

// Plane of one channel, row-major.
using Plane = std::vector<double>;

Plane extract_channel(const Raster& r, int c) {
  Plane p(static_cast<std::size_t>(r.height) * r.width);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) p[static_cast<std::size_t>(y) * r.width + x] = r.at(y, x, c);
  }
  return p;
}

// 'Valid' separable correlation: out[u][v] = sum_{i,j} g[i] g[j] in[u+i][v+j].
Plane filter_valid(const Plane& in, int h, int w, const std::vector<double>& g) {
  const int ws = static_cast<int>(g.size());
  const int oh = h - ws + 1, ow = w - ws + 1;
  Plane tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int v = 0; v < ow; ++v) {
      double s = 0.0;
      for (int j = 0; j < ws; ++j) s += g[j] * in[static_cast<std::size_t>(y) * w + v + j];
      tmp[static_cast<std::size_t>(y) * ow + v] = s;
    }
  }
  Plane out(static_cast<std::size_t>(oh) * ow);
  for (int u = 0; u < oh; ++u) {
    for (int v = 0; v < ow; ++v) {
      double s = 0.0;
      for (int i = 0; i < ws; ++i) s += g[i] * tmp[static_cast<std::size_t>(u + i) * ow + v];
      out[static_cast<std::size_t>(u) * ow + v] = s;
    }
  }
  return out;
}

// Adjoint of filter_valid: scatters an (oh x ow) map back onto (h x w).
Plane filter_valid_adjoint(const Plane& m, int h, int w, const std::vector<double>& g) {
  const int ws = static_cast<int>(g.size());
  const int oh = h - ws + 1, ow = w - ws + 1;
  Plane tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int u = 0; u < oh; ++u) {
    for (int v = 0; v < ow; ++v) {
      const double mv = m[static_cast<std::size_t>(u) * ow + v];
      for (int i = 0; i < ws; ++i) tmp[static_cast<std::size_t>(u + i) * ow + v] += g[i] * mv;
    }
  }
  Plane out(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int v = 0; v < ow; ++v) {
      const double tv = tmp[static_cast<std::size_t>(y) * ow + v];
      for (int j = 0; j < ws; ++j) out[static_cast<std::size_t>(y) * w + v + j] += g[j] * tv;
    }
  }
  return out;
}

struct ChannelSsim {
  double mean = 0.0;
  Plane grad;  // d mean / d b
};

ChannelSsim ssim_channel(const Plane& a, const Plane& b, int h, int w,
                         const std::vector<double>& g, const SsimParams& p, bool want_grad) {
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  Plane aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Plane mu_a = filter_valid(a, h, w, g);
  const Plane mu_b = filter_valid(b, h, w, g);
  const Plane e_aa = filter_valid(aa, h, w, g);
  const Plane e_bb = filter_valid(bb, h, w, g);
  const Plane e_ab = filter_valid(ab, h, w, g);
  const std::size_t positions = mu_a.size();

  ChannelSsim out;
  Plane d_mu(positions), d_ebb(positions), d_eab(positions);
  double total = 0.0;
  for (std::size_t k = 0; k < positions; ++k) {
    const double ma = mu_a[k], mb = mu_b[k];
    const double saa = e_aa[k] - ma * ma;
    const double sbb = e_bb[k] - mb * mb;
    const double sab = e_ab[k] - ma * mb;
    const double a1 = 2.0 * ma * mb + c1;
    const double a2 = 2.0 * sab + c2;
    const double b1 = ma * ma + mb * mb + c1;
    const double b2 = saa + sbb + c2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (want_grad) {
      d_mu[k] = s * (2.0 * ma / a1 - 2.0 * ma / a2 - 2.0 * mb / b1 + 2.0 * mb / b2);
      d_eab[k] = s * 2.0 / a2;
      d_ebb[k] = -s / b2;
    }
  }
  out.mean = total / static_cast<double>(positions);
  if (want_grad) {
    const Plane g_mu = filter_valid_adjoint(d_mu, h, w, g);
    const Plane g_eab = filter_valid_adjoint(d_eab, h, w, g);
    const Plane g_ebb = filter_valid_adjoint(d_ebb, h, w, g);
    out.grad.resize(a.size());
    const double inv = 1.0 / static_cast<double>(positions);
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.grad[i] = inv * (g_mu[i] + a[i] * g_eab[i] + 2.0 * b[i] * g_ebb[i]);
    }
  }
  return out;
}

SsimGradient ssim_impl(const Image& a, const Image& b, const SsimParams& p, bool want_grad) {
  p.validate();
  if (!a.same_shape(b)) throw InvalidArgument("ssim: shape mismatch");
  if (a.height < p.window_size || a.width < p.window_size) {
    throw InvalidArgument("ssim: image smaller than the window");
  }
  const auto g = gaussian_kernel_1d(p.window_sigma, p.window_size);
  SsimGradient out;
  if (want_grad) out.grad_b.assign(b.data.size(), 0.0);
  for (int c = 0; c < a.channels; ++c) {
    const auto res = ssim_channel(extract_channel(a, c), extract_channel(b, c), a.height, a.width,
                                  g, p, want_grad);
    out.value += res.mean;
    if (want_grad) {
      for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
          out.grad_b[b.index(y, x, c)] =
              res.grad[static_cast<std::size_t>(y) * a.width + x] / a.channels;
        }
      }
    }
  }
  out.value /= a.channels;
  return out;
}

int reflect_index(int i, int n) {
  // Half-sample symmetric extension: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  return ssim_impl(a, b, p, false).value;
}

SsimGradient ssim_with_gradient(const Image& a, const Image& b, const SsimParams& p) {
  return ssim_impl(a, b, p, true);
}

double dssim(const Image& a, const Image& b, const SsimParams& p) {
  return (1.0 - ssim(a, b, p)) / 2.0;
}

Image gaussian_blur(const Image& image, double sigma, int kernel_size) {
  if (kernel_size % 2 == 0 || kernel_size < 1) {
    throw InvalidArgument("gaussian_blur: kernel size must be odd, got " + std::to_string(kernel_size));
  }
  const auto k = gaussian_kernel_1d(sigma, kernel_size);
  const int r = kernel_size / 2;
  const int h = image.height, w = image.width, ch = image.channels;
  Image tmp(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int j = -r; j <= r; ++j) s += k[j + r] * image.at(y, reflect_index(x + j, w), c);
        tmp.at(y, x, c) = s;
      }
    }
  }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(reflect_index(y + i, h), x, c);
        out.at(y, x, c) = std::clamp(s, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) throw InvalidArgument("resize_bilinear: target size must be positive");
  if (new_h == image.height && new_w == image.width) return image;
  const auto coord = [](int i, int out_n, int in_n) {
    if (out_n == 1) return 0.5 * (in_n - 1);
    return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
  };
  Image out(new_h, new_w, image.channels);
  for (int y = 0; y < new_h; ++y) {
    const double sy = coord(y, new_h, image.height);
    const int y0 = std::min(static_cast<int>(std::floor(sy)), image.height - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < new_w; ++x) {
      const double sx = coord(x, new_w, image.width);
      const int x0 = std::min(static_cast<int>(std::floor(sx)), image.width - 1);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1.0 - fx) * image.at(y0, x0, c) + fx * image.at(y0, x1, c);
        const double bot = (1.0 - fx) * image.at(y1, x0, c) + fx * image.at(y1, x1, c);
        out.at(y, x, c) = std::clamp((1.0 - fy) * top + fy * bot, 0.0, 1.0);
      }
    }
  }
  return out;
}

double linf_norm(const Perturbation& delta) {
  double m = 0.0;
  for (double v : delta.data) m = std::max(m, std::abs(v));
  return m;
}

Perturbation project_linf(const Perturbation& delta, double t) {
  if (t < 0.0) throw InvalidArgument("project_linf: negative threshold");
  Perturbation out = delta;
  for (double& v : out.data) v = std::clamp(v, -t, t);
  return out;
}

Perturbation signed_difference(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InvalidArgument("signed_difference: shape mismatch");
  Perturbation out(a.height, a.width, a.channels);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

}  // namespace advcloak
