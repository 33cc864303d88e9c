#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "advcloak/embedder.hpp"
#include "advcloak/errors.hpp"
#include "oracles.hpp"
#include "tiny.hpp"

using namespace advcloak;

namespace {

std::int64_t conv(int in, int out) { return 9LL * in * out + out; }

}  // namespace

TEST_CASE("eer matches the exhaustive oracle") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<int> q(0, 20);
    std::vector<double> g, im;
    // Coarse grid values force ties.
    for (int i = 0; i < 15 + trial; ++i) g.push_back(q(rng) / 20.0 * 0.8);
    for (int i = 0; i < 25 + trial; ++i) im.push_back(0.3 + q(rng) / 20.0);
    const EerResult r = eer_threshold(g, im);
    const oracle::Eer o = oracle::eer_brute(g, im);
    CHECK(r.tau == o.tau);
    CHECK(r.eer == doctest::Approx(o.eer).epsilon(1e-15));
  }
  CHECK_THROWS_AS(eer_threshold({}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(eer_threshold({0.5}, {0.5}), InvalidArgument);
}

TEST_CASE("eer on separable distances is zero") {
  const EerResult r = eer_threshold({0.1, 0.2, 0.3}, {0.7, 0.8});
  CHECK(r.eer == 0.0);
  CHECK(r.tau == doctest::Approx(0.5));
}

TEST_CASE("verification pairs") {
  const std::vector<int> ids{0, 0, 0, 1, 1, 2, 2, 2, 2};
  const auto p = make_verification_pairs(ids, 4);
  CHECK(p.genuine.size() == 3 + 1 + 6);
  CHECK(p.impostor.size() == p.genuine.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto [i, j] : p.impostor) {
    CHECK(ids[i] != ids[j]);
    CHECK(seen.insert({i, j}).second);
  }
  const auto p2 = make_verification_pairs(ids, 4);
  CHECK(p2.impostor == p.impostor);
}

TEST_CASE("embedder parameter count closed form") {
  EmbedderSpec s;
  s.widths = {16, 32, 64, 64};
  s.embedding_dim = 32;
  const Embedder e(s, 10);
  std::int64_t want = 0;
  int in = 3;
  for (int w : s.widths) {
    want += conv(in, w) + 2 * w;
    in = w;
  }
  want += 64LL * 32 + 32;
  CHECK(e.parameter_count() == want);
  CHECK(e.feature_parameter_count() == want - (64LL * 32 + 32));
  s.feature_tap = 1;
  const Embedder e1(s, 10);
  CHECK(e1.feature_parameter_count() == conv(3, 16) + 32 + conv(16, 32) + 64);
  CHECK(e1.feature_shape() == Shape{1, 32, 16, 16});
}

TEST_CASE("embedding is unit norm, batch-invariant and read-only") {
  const auto& w = tiny::world();
  const std::string h = w.embedder.weights_hash();
  std::vector<Image> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(w.data[i].image);
  const auto batch = w.embedder.embed_batch(imgs);
  for (int i = 0; i < 5; ++i) {
    const Embedding e = w.embedder.embed(imgs[i]);
    CHECK(std::abs(e.norm() - 1.0) < 1e-6);
    CHECK(e == batch[i]);
  }
  CHECK(w.embedder.weights_hash() == h);
  CHECK_THROWS_AS(w.embedder.embed(Image(8, 8, 3, 0.5)), InvalidArgument);
}

TEST_CASE("embedder training is deterministic and round-trips to disk") {
  const auto& w = tiny::world();
  const Embedder again = train_embedder(w.data, tiny::embedder_spec());
  CHECK(again.weights_hash() == w.embedder.weights_hash());
  const auto dir = std::filesystem::temp_directory_path() / "advcloak_embedder_test";
  w.embedder.save(dir);
  const Embedder loaded = Embedder::load(dir);
  CHECK(loaded.weights_hash() == w.embedder.weights_hash());
  CHECK(loaded.embed(w.data[0].image) == w.embedder.embed(w.data[0].image));
  std::filesystem::remove_all(dir);
}

TEST_CASE("threshold calibration and verification") {
  const auto& w = tiny::world();
  const VerificationThreshold th = calibrate_threshold(w.embedder, w.data, DistanceMetric::kEuclidean, 1);
  CHECK(th.tau > 0.0);
  CHECK(th.eer >= 0.0);
  CHECK(th.eer <= 0.5);
  const Embedding ref = w.embedder.embed(w.data[0].image);
  CHECK(verify(w.embedder, w.data[0].image, ref, th));
  CHECK(distance(ref, ref, DistanceMetric::kCosine) == doctest::Approx(0.0));
  CHECK(distance_metric_from_string("cosine") == DistanceMetric::kCosine);
  CHECK_THROWS_AS(distance_metric_from_string("l1"), ConfigError);
}
