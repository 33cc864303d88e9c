#pragma once
// Exact t-SNE in double precision, plus CSV and scatter-plot output.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace advcloak {

using Point2 = std::array<double, 2>;

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  // 0 selects max(n / early_exaggeration / 4, 50).
  double learning_rate = 0.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 1;

  void validate() const;
  double resolved_learning_rate(int n) const;
};

struct TsneResult {
  std::vector<Point2> points;
  std::vector<double> kl_trace;  // KL(P || Q) before each update
};

// Row-major n x n squared Euclidean distances.
std::vector<double> squared_distances(const std::vector<std::vector<double>>& x);

// Row-major p_{j|i}: each row a Gaussian over the other points whose
// precision is binary-searched so the row's perplexity matches.
std::vector<double> conditional_probabilities(const std::vector<double>& d2, int n, double perplexity);

// (p_{j|i} + p_{i|j}) / (2n)
std::vector<double> joint_probabilities(const std::vector<double>& conditional, int n);

// Largest usable perplexity for n points: min(requested, just below (n-1)/3).
double feasible_perplexity(int n, double requested);

double tsne_kl(const std::vector<double>& P, const std::vector<Point2>& y);
// d KL(exaggeration * P || Q) / d y
std::vector<Point2> tsne_gradient(const std::vector<double>& P, const std::vector<Point2>& y,
                                  double exaggeration = 1.0);

// Throws InvalidArgument unless n >= 4 and perplexity < (n-1)/3.
TsneResult tsne(const std::vector<std::vector<double>>& x, const TsneConfig& cfg);

struct TsneRow {
  int identity_id = 0;
  int image_id = 0;
  std::string kind;  // original | cloaked | target
};

void write_tsne_csv(const std::filesystem::path& path, const std::vector<TsneRow>& rows,
                    const std::vector<Point2>& points);
// White canvas; originals blue, cloaked red, target green.
void write_tsne_png(const std::filesystem::path& path, const std::vector<TsneRow>& rows,
                    const std::vector<Point2>& points, int size = 400);

}  // namespace advcloak
