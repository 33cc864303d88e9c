#pragma once
// Property sweeps shared by the unit tests and the acceptance binary. Each
// returns the worst observed error so callers decide the tolerance.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "advcloak/imaging.hpp"
#include "advcloak/losses.hpp"
#include "advcloak/tsne.hpp"
#include "oracles.hpp"

namespace checks {

struct MetricSweep {
  double ssim_oracle_err = 0.0;  // max |ssim - brute| over 50 pairs
  double ssim_self_err = 0.0;    // max |ssim(x,x) - 1|
  double blur_const_err = 0.0;
  double resize_identity_err = 0.0;
};

inline MetricSweep metric_sweep(std::uint64_t seed = 2024) {
  using namespace advcloak;
  std::mt19937_64 rng(seed);
  MetricSweep s;
  for (int i = 0; i < 50; ++i) {
    const int c = (i % 3 == 0) ? 3 : 1;
    const Image a = oracle::random_image(16, 16, c, rng);
    Image b = i % 2 ? oracle::random_image(16, 16, c, rng) : a;
    if (i % 2 == 0) {
      std::normal_distribution<double> n(0.0, 0.08);
      for (double& v : b.data) v = std::clamp(v + n(rng), 0.0, 1.0);
    }
    s.ssim_oracle_err = std::max(s.ssim_oracle_err, std::abs(ssim(a, b) - oracle::ssim_brute(a, b)));
    s.ssim_self_err = std::max(s.ssim_self_err, std::abs(ssim(a, a) - 1.0));
    const Image cst(16, 16, c, std::uniform_real_distribution<double>(0, 1)(rng));
    for (double v : gaussian_blur(cst, 1.0, 5).data) {
      s.blur_const_err = std::max(s.blur_const_err, std::abs(v - cst.data[0]));
    }
    const Image r = resize_bilinear(a, a.height, a.width);
    for (std::size_t k = 0; k < a.size(); ++k) {
      s.resize_identity_err = std::max(s.resize_identity_err, std::abs(r.data[k] - a.data[k]));
    }
  }
  return s;
}

struct GradientSweep {
  double worst_rel = 0.0;
  int checks = 0;
  int terms = 0;  // distinct loss terms covered
};

inline void record(GradientSweep& s, double analytic, double numeric) {
  s.worst_rel = std::max(s.worst_rel, std::abs(analytic - numeric) /
                                          std::max({std::abs(analytic), std::abs(numeric), 1e-7}));
  ++s.checks;
}

// GAN, disc (both arguments), adversarial {mse, two_norm, cosine} x
// {targeted, untargeted}, perturbation {threshold, ssim}.
inline GradientSweep gradient_sweep(std::uint64_t seed = 77, int repeats = 5) {
  using namespace advcloak;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> prob(0.05, 0.95);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GradientSweep s;
  const double h = 1e-6;

  for (int r = 0; r < repeats; ++r) {
    const double p = prob(rng), q = prob(rng);
    record(s, loss_gan_grad(p), oracle::central_difference([](double v) { return loss_gan(v); }, p, h));
    const DiscGrad dg = loss_disc_grad(p, q);
    record(s, dg.d_real, oracle::central_difference([&](double v) { return loss_disc(v, q); }, p, h));
    record(s, dg.d_adv, oracle::central_difference([&](double v) { return loss_disc(p, v); }, q, h));
  }
  s.terms += 2;

  auto unit = [&](int d) {
    Embedding e;
    for (int i = 0; i < d; ++i) e.values.push_back(gauss(rng));
    return normalized(e);
  };
  for (AdvKind kind : {AdvKind::kMse, AdvKind::kTwoNorm, AdvKind::kCosine}) {
    for (bool targeted : {true, false}) {
      for (int r = 0; r < repeats; ++r) {
        const Embedding ref = unit(8);
        const Embedding adv = unit(8);
        AdvLossVariant v{kind, targeted, targeted ? std::optional<Embedding>(ref) : std::nullopt};
        const LossGradient g = loss_adv(adv, ref, v);
        for (std::size_t i = 0; i < adv.dim(); ++i) {
          auto f = [&](double x) {
            Embedding e = adv;
            e.values[i] = x;
            return loss_adv(e, ref, v).value;
          };
          record(s, g.grad[i], oracle::central_difference(f, adv.values[i], h));
        }
      }
      ++s.terms;
    }
  }

  for (int r = 0; r < repeats; ++r) {
    const Image x = oracle::random_image(8, 8, 1, rng);
    Perturbation d(8, 8, 1);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (double& v : d.data) {
      do v = u(rng);
      while (std::abs(std::abs(v) - 0.1) < 1e-3);
    }
    PertLossVariant v{PertKind::kThreshold, 0.1, {}};
    const LossGradient g = loss_pert(x, d, v);
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto f = [&](double val) {
        Perturbation dd = d;
        dd.data[i] = val;
        return loss_pert(x, dd, v).value;
      };
      record(s, g.grad[i], oracle::central_difference(f, d.data[i], h));
    }
  }
  ++s.terms;

  for (int r = 0; r < repeats; ++r) {
    Image x = oracle::random_image(12, 12, 1, rng);
    for (double& v : x.data) v = 0.1 + 0.8 * v;
    Perturbation d(12, 12, 1);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (double& v : d.data) v = u(rng);
    PertLossVariant v{PertKind::kSsim, 0.1, {}};
    v.ssim.window_size = 7;
    const LossGradient g = loss_pert(x, d, v);
    for (std::size_t i = 0; i < d.size(); i += 7) {
      auto f = [&](double val) {
        Perturbation dd = d;
        dd.data[i] = val;
        return loss_pert(x, dd, v).value;
      };
      record(s, g.grad[i], oracle::central_difference(f, d.data[i], 1e-5));
    }
  }
  ++s.terms;
  return s;
}

struct TsneSweep {
  double row_norm_err = 0.0;    // max |sum_j p_{j|i} - 1|
  double joint_norm_err = 0.0;  // |sum P - 1| and max |P - P^T|
  double min_kl = 0.0;
  double fd_rel_err = 0.0;      // 6-point toy
  int separable_seeds = 0;
  int seeds = 10;
};

inline std::vector<std::vector<double>> two_clusters(std::mt19937_64& rng, int per, int dim,
                                                     double gap) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> x;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per; ++i) {
      std::vector<double> v(dim);
      for (int k = 0; k < dim; ++k) v[k] = n(rng) + (k == 0 ? c * gap : 0.0);
      x.push_back(v);
    }
  }
  return x;
}

inline TsneSweep tsne_sweep() {
  using namespace advcloak;
  TsneSweep s;
  s.min_kl = 1e300;
  {
    std::mt19937_64 rng(4);
    const auto x = two_clusters(rng, 10, 5, 6.0);
    const int n = static_cast<int>(x.size());
    const auto c = conditional_probabilities(squared_distances(x), n, 5.0);
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) row += c[i * n + j];
      s.row_norm_err = std::max(s.row_norm_err, std::abs(row - 1.0));
    }
    const auto P = joint_probabilities(c, n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        total += P[i * n + j];
        s.joint_norm_err = std::max(s.joint_norm_err, std::abs(P[i * n + j] - P[j * n + i]));
      }
    }
    s.joint_norm_err = std::max(s.joint_norm_err, std::abs(total - 1.0));
  }
  {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> x(6, std::vector<double>(3));
    for (auto& v : x)
      for (double& e : v) e = g(rng);
    const auto P = joint_probabilities(conditional_probabilities(squared_distances(x), 6, 1.5), 6);
    std::vector<Point2> y(6);
    for (auto& p : y) p = {g(rng), g(rng)};
    const auto grad = tsne_gradient(P, y);
    for (int i = 0; i < 6; ++i) {
      for (int k = 0; k < 2; ++k) {
        auto f = [&](double v) {
          auto yy = y;
          yy[i][k] = v;
          return tsne_kl(P, yy);
        };
        const double num = oracle::central_difference(f, y[i][k], 1e-6);
        s.fd_rel_err = std::max(s.fd_rel_err, oracle::relative_error(grad[i][k], num));
      }
    }
  }
  for (int seed = 0; seed < s.seeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto x = two_clusters(rng, 12, 6, 8.0);
    TsneConfig cfg;
    cfg.perplexity = 5.0;
    cfg.iterations = 500;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const TsneResult r = tsne(x, cfg);
    for (double kl : r.kl_trace) s.min_kl = std::min(s.min_kl, kl);
    Point2 c0{0, 0}, c1{0, 0};
    for (int i = 0; i < 12; ++i) {
      c0[0] += r.points[i][0] / 12;
      c0[1] += r.points[i][1] / 12;
      c1[0] += r.points[12 + i][0] / 12;
      c1[1] += r.points[12 + i][1] / 12;
    }
    auto d2 = [](const Point2& a, const Point2& b) {
      return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
    };
    bool ok = true;
    for (int i = 0; i < 24; ++i) {
      const bool first = i < 12;
      const double own = d2(r.points[i], first ? c0 : c1), other = d2(r.points[i], first ? c1 : c0);
      ok = ok && own < other;
    }
    s.separable_seeds += ok ? 1 : 0;
  }
  return s;
}

}  // namespace checks
