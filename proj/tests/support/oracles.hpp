#pragma once
// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library's metric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "advcloak/embedder.hpp"
#include "advcloak/imaging.hpp"

namespace oracle {

inline advcloak::Image random_image(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  advcloak::Image img(h, w, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Direct 2-D window, every statistic summed from scratch at every position.
inline double ssim_brute(const advcloak::Image& a, const advcloak::Image& b, int win = 11,
                         double sigma = 1.5, double k1 = 0.01, double k2 = 0.03, double L = 1.0) {
  const int r = win / 2;
  std::vector<double> w(static_cast<std::size_t>(win) * win);
  double wsum = 0.0;
  for (int u = 0; u < win; ++u) {
    for (int v = 0; v < win; ++v) {
      const double du = u - r, dv = v - r;
      w[u * win + v] = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
      wsum += w[u * win + v];
    }
  }
  for (double& x : w) x /= wsum;
  const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + win <= a.height; ++y) {
      for (int x = 0; x + win <= a.width; ++x) {
        double ma = 0, mb = 0;
        for (int u = 0; u < win; ++u)
          for (int v = 0; v < win; ++v) {
            ma += w[u * win + v] * a.at(y + u, x + v, c);
            mb += w[u * win + v] * b.at(y + u, x + v, c);
          }
        double va = 0, vb = 0, cov = 0;
        for (int u = 0; u < win; ++u)
          for (int v = 0; v < win; ++v) {
            const double da = a.at(y + u, x + v, c) - ma, db = b.at(y + u, x + v, c) - mb;
            va += w[u * win + v] * da * da;
            vb += w[u * win + v] * db * db;
            cov += w[u * win + v] * da * db;
          }
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += acc / count;
  }
  return total / a.channels;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Exhaustive EER: every midpoint between consecutive distinct pooled values,
// minimizing |FMR - FNMR|, then FMR + FNMR, then tau.
struct Eer {
  double tau, eer;
};

inline Eer eer_brute(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  std::vector<double> all = genuine;
  all.insert(all.end(), impostor.begin(), impostor.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> cands;
  for (std::size_t i = 0; i + 1 < all.size(); ++i) cands.push_back((all[i] + all[i + 1]) / 2.0);
  Eer best{0, 0};
  double bd = 1e9, bs = 1e9;
  bool first = true;
  for (double tau : cands) {
    double fm = 0, fn = 0;
    for (double d : impostor) fm += d < tau;
    for (double d : genuine) fn += !(d < tau);
    fm /= impostor.size();
    fn /= genuine.size();
    const double diff = std::abs(fm - fn), sum = fm + fn;
    if (first || diff < bd || (diff == bd && (sum < bs || (sum == bs && tau < best.tau)))) {
      best = {tau, sum / 2.0};
      bd = diff;
      bs = sum;
      first = false;
    }
  }
  return best;
}

// Per-image success: one embed() call per image, no batching.
inline bool naive_success(const advcloak::EmbeddingModel& model, const advcloak::Image& cloaked,
                          const advcloak::Embedding& own, const advcloak::Embedding* target,
                          double tau, advcloak::DistanceMetric metric) {
  const advcloak::Embedding e = model.embed(cloaked);
  const double d_own = advcloak::distance(e, own, metric);
  if (target) return advcloak::distance(e, *target, metric) < d_own;
  return !(d_own < tau);
}

}  // namespace oracle
