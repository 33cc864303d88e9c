#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <utility>

#include "advcloak/adversary.hpp"
#include "advcloak/errors.hpp"

using namespace advcloak;

namespace {

std::int64_t conv(int in, int out) { return 9LL * in * out + out; }

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t(s);
  for (float& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("generator parameter count and output range") {
  const GeneratorSpec s;
  const Generator g(s, 1);
  std::int64_t want = 0;
  int in = s.feature_channels;
  for (int w : s.widths) {
    want += conv(in, w) + 2 * w;
    in = w;
  }
  want += conv(in, 3);
  CHECK(g.parameter_count() == want);
  CHECK(count_parameters(g) == want);

  const Tensor out = g.infer(random_tensor({2, 64, 4, 4}, 2));
  CHECK(out.shape() == Shape{2, 3, 32, 32});
  for (float v : out.values()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  CHECK_THROWS_AS(g.infer(Tensor(1, 32, 4, 4)), InvalidArgument);
  GeneratorSpec bad = s;
  bad.widths = {64, 32};
  CHECK_THROWS_AS(Generator(bad, 1), InvalidArgument);
}

TEST_CASE("generator is batch-invariant and seed-deterministic") {
  const Generator g(GeneratorSpec{}, 9), g2(GeneratorSpec{}, 9);
  CHECK(g.weights_hash() == g2.weights_hash());
  const Tensor f = random_tensor({3, 64, 4, 4}, 4);
  const Tensor all = g.infer(f);
  Tensor one(1, 64, 4, 4);
  std::copy(f.sample(1).begin(), f.sample(1).end(), one.values().begin());
  const Tensor o = g.infer(one);
  for (std::size_t i = 0; i < o.size(); ++i) CHECK(o.values()[i] == all.sample(1)[i]);
}

TEST_CASE("discriminator parameter count and probabilities") {
  const DiscriminatorSpec s;
  const Discriminator d(s, 3);
  std::int64_t want = conv(3, 16) + conv(16, 32) + conv(32, 64) + 64LL * 4 * 4 + 1;
  CHECK(d.parameter_count() == want);
  for (double p : d.probabilities(random_tensor({4, 3, 32, 32}, 5))) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  CHECK(sigmoid_probability(1e6) < 1.0);
  CHECK(sigmoid_probability(-1e6) > 0.0);
}

TEST_CASE("student parameter count closed form") {
  const StudentSpec s;  // widths {16, 24, 32}
  const Student st(s, 1);
  const std::int64_t enc = (conv(3, 16) + 32) + (conv(16, 24) + 48) + (conv(24, 32) + 64);
  const std::int64_t dec = (conv(32 + 24, 24) + 48) + (conv(24 + 16, 16) + 32);
  CHECK(st.parameter_count() == enc + dec + conv(16, 3));
  CHECK(st.parameter_count() == 29427);

  const Tensor out = st.infer(random_tensor({2, 3, 32, 32}, 6));
  CHECK(out.shape() == Shape{2, 3, 32, 32});
  for (float v : out.values()) CHECK(std::abs(v) <= 1.0f);
}

TEST_CASE("models round-trip through checkpoints") {
  const auto dir = std::filesystem::temp_directory_path() / "advcloak_adv_test";
  Student a(StudentSpec{}, 1), b(StudentSpec{}, 2);
  CHECK(a.weights_hash() != b.weights_hash());
  save_model(dir, "student", std::as_const(a).state_tensors(), a.manifest());
  load_model(dir, "student", b.state_tensors());
  CHECK(a.weights_hash() == b.weights_hash());
  Generator g(GeneratorSpec{}, 1);
  CHECK_THROWS(load_model(dir, "student", g.state_tensors()));
  CHECK_THROWS(load_model(dir / "missing", "student", b.state_tensors()));
  std::filesystem::remove_all(dir);
}
