#include <doctest.h>

#include <filesystem>

#include "advcloak/errors.hpp"
#include "advcloak/tsne.hpp"
#include "checks.hpp"

using namespace advcloak;

TEST_CASE("t-SNE properties") {
  const checks::TsneSweep s = checks::tsne_sweep();
  CHECK(s.row_norm_err < 1e-9);
  CHECK(s.joint_norm_err < 1e-9);
  CHECK(s.min_kl >= 0.0);
  CHECK(s.fd_rel_err < 1e-4);
  CHECK(s.separable_seeds == s.seeds);
}

TEST_CASE("conditional rows hit the requested perplexity") {
  std::mt19937_64 rng(2);
  const auto x = checks::two_clusters(rng, 8, 4, 3.0);
  const int n = static_cast<int>(x.size());
  const auto c = conditional_probabilities(squared_distances(x), n, 4.0);
  for (int i = 0; i < n; ++i) {
    double h = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p = c[i * n + j];
      if (p > 0) h -= p * std::log(p);
    }
    CHECK(std::exp(h) == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(c[i * n + i] == 0.0);
  }
}

TEST_CASE("t-SNE preconditions and determinism") {
  std::vector<std::vector<double>> tiny(3, std::vector<double>(2, 0.0));
  CHECK_THROWS_AS(tsne(tiny, TsneConfig{}), InvalidArgument);
  std::mt19937_64 rng(8);
  const auto x = checks::two_clusters(rng, 5, 3, 4.0);
  TsneConfig cfg;
  cfg.perplexity = 30.0;
  CHECK_THROWS_AS(tsne(x, cfg), InvalidArgument);
  cfg.perplexity = feasible_perplexity(10, 30.0);
  CHECK(cfg.perplexity < 3.0);
  cfg.iterations = 50;
  const auto a = tsne(x, cfg), b = tsne(x, cfg);
  CHECK(a.points == b.points);
  CHECK(a.kl_trace.size() == 50);
}

TEST_CASE("t-SNE outputs") {
  const auto dir = std::filesystem::temp_directory_path() / "advcloak_tsne_test";
  std::filesystem::create_directories(dir);
  const std::vector<TsneRow> rows{{1, 0, "original"}, {1, 0, "cloaked"}, {9, 2, "target"}};
  const std::vector<Point2> pts{{0, 0}, {1, 1}, {-1, 2}};
  write_tsne_csv(dir / "t.csv", rows, pts);
  write_tsne_png(dir / "t.png", rows, pts, 64);
  CHECK(std::filesystem::file_size(dir / "t.csv") > 0);
  CHECK(std::filesystem::file_size(dir / "t.png") > 0);
  std::filesystem::remove_all(dir);
}
