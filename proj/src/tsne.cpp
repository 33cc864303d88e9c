#include "advcloak/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include "advcloak/errors.hpp"
#include "advcloak/imaging.hpp"
#include "advcloak/png_io.hpp"

namespace advcloak {

void TsneConfig::validate() const {
  if (!(perplexity > 0.0)) throw InvalidArgument("tsne: perplexity must be > 0");
  if (iterations < 1) throw InvalidArgument("tsne: iterations must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("tsne: learning_rate must be >= 0");
  if (!(early_exaggeration >= 1.0)) throw InvalidArgument("tsne: early_exaggeration must be >= 1");
  if (exaggeration_iterations < 0 || momentum_switch < 0) throw InvalidArgument("tsne: negative schedule");
}

double TsneConfig::resolved_learning_rate(int n) const {
  if (learning_rate > 0.0) return learning_rate;
  return std::max(static_cast<double>(n) / early_exaggeration / 4.0, 50.0);
}

std::vector<double> squared_distances(const std::vector<std::vector<double>>& x) {
  const std::size_t n = x.size();
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() != x[0].size()) throw InvalidArgument("tsne: ragged input");
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x[i].size(); ++k) s += (x[i][k] - x[j][k]) * (x[i][k] - x[j][k]);
      d2[i * n + j] = d2[j * n + i] = s;
    }
  }
  return d2;
}

std::vector<double> conditional_probabilities(const std::vector<double>& d2, int n, double perplexity) {
  if (static_cast<std::size_t>(n) * n != d2.size()) throw InvalidArgument("tsne: distance matrix size");
  const double target = std::log(perplexity);
  std::vector<double> P(d2.size(), 0.0);
  std::vector<double> row(n);
  for (int i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, d2[i * n + j]);
    }
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, wsum = 0.0;
      for (int j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (d2[i * n + j] - dmin));
        sum += row[j];
        wsum += row[j] * (d2[i * n + j] - dmin);
      }
      // H = log(sum) + beta * E[d - dmin]
      const double entropy = std::log(sum) + beta * wsum / sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-10) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += row[j];
    for (int j = 0; j < n; ++j) P[i * n + j] = row[j] / sum;
  }
  return P;
}

std::vector<double> joint_probabilities(const std::vector<double>& c, int n) {
  std::vector<double> P(c.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) P[i * n + j] = (c[i * n + j] + c[j * n + i]) / (2.0 * n);
  }
  return P;
}

double feasible_perplexity(int n, double requested) {
  const double bound = (n - 1) / 3.0;
  return std::min(requested, bound * 0.99);
}

namespace {

// Unnormalized Student-t kernel w_ij = 1 / (1 + |yi - yj|^2) and its sum.
double kernel_matrix(const std::vector<Point2>& y, std::vector<double>& w) {
  const std::size_t n = y.size();
  w.assign(n * n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
      const double v = 1.0 / (1.0 + dx * dx + dy * dy);
      w[i * n + j] = w[j * n + i] = v;
      z += 2.0 * v;
    }
  }
  return z;
}

}  // namespace

double tsne_kl(const std::vector<double>& P, const std::vector<Point2>& y) {
  std::vector<double> w;
  const double z = kernel_matrix(y, w);
  double kl = 0.0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (P[k] > 0.0) kl += P[k] * std::log(P[k] / (w[k] / z));
  }
  return kl;
}

std::vector<Point2> tsne_gradient(const std::vector<double>& P, const std::vector<Point2>& y,
                                  double exaggeration) {
  const std::size_t n = y.size();
  std::vector<double> w;
  const double z = kernel_matrix(y, w);
  std::vector<Point2> g(n, Point2{0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double m = 4.0 * (exaggeration * P[i * n + j] - w[i * n + j] / z) * w[i * n + j];
      g[i][0] += m * (y[i][0] - y[j][0]);
      g[i][1] += m * (y[i][1] - y[j][1]);
    }
  }
  return g;
}

TsneResult tsne(const std::vector<std::vector<double>>& x, const TsneConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(x.size());
  if (n < 4) throw InvalidArgument("tsne: need at least 4 points");
  if (!(cfg.perplexity < (n - 1) / 3.0)) {
    throw InvalidArgument("tsne: perplexity " + std::to_string(cfg.perplexity) + " infeasible for " +
                          std::to_string(n) + " points");
  }
  const auto P = joint_probabilities(conditional_probabilities(squared_distances(x), n, cfg.perplexity), n);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  TsneResult r;
  r.points.resize(n);
  for (auto& p : r.points) p = {normal(rng), normal(rng)};
  std::vector<Point2> update(n, Point2{0.0, 0.0});
  std::vector<Point2> gains(n, Point2{1.0, 1.0});
  const double lr = cfg.resolved_learning_rate(n);
  r.kl_trace.reserve(cfg.iterations);
  for (int it = 0; it < cfg.iterations; ++it) {
    r.kl_trace.push_back(tsne_kl(P, r.points));
    const double ex = it < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double mom = it < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;
    const auto g = tsne_gradient(P, r.points, ex);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        // Delta-bar-delta gains.
        const bool same_sign = (g[i][d] > 0.0) == (update[i][d] > 0.0);
        gains[i][d] = same_sign ? std::max(gains[i][d] * 0.8, 0.01) : gains[i][d] + 0.2;
        update[i][d] = mom * update[i][d] - lr * gains[i][d] * g[i][d];
        r.points[i][d] += update[i][d];
      }
    }
    double cx = 0.0, cy = 0.0;
    for (const auto& p : r.points) {
      cx += p[0];
      cy += p[1];
    }
    for (auto& p : r.points) {
      p[0] -= cx / n;
      p[1] -= cy / n;
    }
  }
  return r;
}

void write_tsne_csv(const std::filesystem::path& path, const std::vector<TsneRow>& rows,
                    const std::vector<Point2>& points) {
  if (rows.size() != points.size()) throw InvalidArgument("tsne csv: length mismatch");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << std::setprecision(10) << "identity_id,image_id,kind,x,y\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    f << rows[i].identity_id << "," << rows[i].image_id << "," << rows[i].kind << "," << points[i][0]
      << "," << points[i][1] << "\n";
  }
}

void write_tsne_png(const std::filesystem::path& path, const std::vector<TsneRow>& rows,
                    const std::vector<Point2>& points, int size) {
  if (rows.size() != points.size()) throw InvalidArgument("tsne png: length mismatch");
  if (points.empty()) throw InvalidArgument("tsne png: no points");
  Image canvas(size, size, 3, 1.0);
  double x0 = points[0][0], x1 = x0, y0 = points[0][1], y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  const double margin = 0.06 * size;
  auto draw = [&](const Point2& p, int radius, std::array<double, 3> rgb) {
    const double px = margin + (p[0] - x0) / span * (size - 2 * margin);
    const double py = margin + (y1 - p[1]) / span * (size - 2 * margin);
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy > radius * radius) continue;
        const int cx = static_cast<int>(std::lround(px)) + dx;
        const int cy = static_cast<int>(std::lround(py)) + dy;
        if (cx < 0 || cy < 0 || cx >= size || cy >= size) continue;
        for (int c = 0; c < 3; ++c) canvas.at(cy, cx, c) = rgb[c];
      }
    }
  };
  // Targets last so they stay visible.
  for (const char* kind : {"original", "cloaked", "target"}) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].kind != kind) continue;
      if (rows[i].kind == "original") draw(points[i], 3, {0.15, 0.35, 0.85});
      else if (rows[i].kind == "cloaked") draw(points[i], 3, {0.85, 0.2, 0.15});
      else draw(points[i], 6, {0.1, 0.65, 0.2});
    }
  }
  write_png(path, canvas);
}

}  // namespace advcloak
