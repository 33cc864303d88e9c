#include <doctest.h>

#include <cmath>
#include <random>

#include "advcloak/errors.hpp"
#include "advcloak/evaluation.hpp"
#include "oracles.hpp"
#include "tiny.hpp"

using namespace advcloak;

namespace {

// Noise keyed on the image content so batched and single calls agree.
class NoiseCloaker final : public Cloaker {
 public:
  explicit NoiseCloaker(double scale) : scale_(scale) {}
  std::string name() const override { return "noise"; }
  Tensor raw_batch(const Tensor& images) const override {
    Tensor out(images.shape());
    for (int n = 0; n < images.n(); ++n) {
      double key = 0.0;
      for (float v : images.sample(n)) key += v;
      std::mt19937_64 rng(static_cast<std::uint64_t>(key * 1e4));
      std::uniform_real_distribution<float> u(-1.0f, 1.0f);
      for (float& v : out.sample(n)) v = static_cast<float>(scale_) * u(rng);
    }
    return out;
  }

 private:
  double scale_;
};

struct Setup {
  EvalProtocol untargeted, targeted;
  std::vector<Image> images;
  std::vector<int> ids;
};

Setup setup() {
  const auto& w = tiny::world();
  Setup s;
  const VerificationThreshold th = calibrate_threshold(w.embedder, w.data, DistanceMetric::kEuclidean, 2);
  std::vector<Image> target_imgs;
  for (const auto& l : w.data) {
    if (l.identity_id == 5) target_imgs.push_back(l.image);
  }
  s.untargeted = make_protocol(w.embedder, w.data, th);
  s.targeted = make_protocol(w.embedder, w.data, th, identity_reference(w.embedder, target_imgs));
  for (const auto& l : w.data) {
    s.images.push_back(l.image);
    s.ids.push_back(l.identity_id);
  }
  return s;
}

double naive_rate(const EmbeddingModel& m, const std::vector<Image>& imgs, const std::vector<int>& ids,
                  const EvalProtocol& p) {
  long ok = 0;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    ok += oracle::naive_success(m, imgs[i], p.references.at(ids[i]), p.target ? &*p.target : nullptr, p.th.tau,
                                p.th.metric);
  }
  return static_cast<double>(ok) / static_cast<double>(imgs.size());
}

}  // namespace

TEST_CASE("references are unit norm means per identity") {
  const Setup s = setup();
  CHECK(s.untargeted.references.size() == 6);
  for (const auto& [id, e] : s.untargeted.references) CHECK(std::abs(e.norm() - 1.0) < 1e-9);
  CHECK(s.targeted.target.has_value());
}

TEST_CASE("success rates equal the naive per-image oracle") {
  const auto& w = tiny::world();
  const Setup s = setup();
  for (double scale : {0.0, 0.2, 0.6}) {
    const NoiseCloaker nc(scale);
    const double t = scale > 0.0 ? scale : 0.1;
    std::vector<Image> cloaked;
    for (const auto& o : cloak_all(nc, s.images, t)) cloaked.push_back(o.image);
    for (const EvalProtocol* p : {&s.untargeted, &s.targeted}) {
      CHECK(success_rate(w.embedder, cloaked, s.ids, *p) == naive_rate(w.embedder, cloaked, s.ids, *p));
      CHECK(attack_success_rate(w.embedder, nc, w.data, *p, t) == naive_rate(w.embedder, cloaked, s.ids, *p));
      std::vector<Image> blurred;
      for (const auto& c : cloaked) blurred.push_back(gaussian_blur(c, 0.5, 3));
      CHECK(robustness_under_blur(w.embedder, nc, w.data, *p, t, BlurParams{0.5, 3}) ==
            naive_rate(w.embedder, blurred, s.ids, *p));
    }
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(attack_succeeds(w.embedder, cloaked[i], s.ids[i], s.untargeted) ==
            oracle::naive_success(w.embedder, cloaked[i], s.untargeted.references.at(s.ids[i]), nullptr,
                                  s.untargeted.th.tau, s.untargeted.th.metric));
    }
  }
}

TEST_CASE("zero perturbation baseline is the clean false-non-match rate") {
  const auto& w = tiny::world();
  const Setup s = setup();
  const BlurParams b{0.5, 3};
  long fn = 0;
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    const Image bl = gaussian_blur(s.images[i], b.sigma, b.kernel);
    fn += !verify(w.embedder, bl, s.untargeted.references.at(s.ids[i]), s.untargeted.th);
  }
  CHECK(robustness_under_blur(w.embedder, ZeroCloaker(), w.data, s.untargeted, 0.1, b) ==
        static_cast<double>(fn) / static_cast<double>(s.images.size()));
}

TEST_CASE("statistics helpers") {
  CHECK(quantile({3.0, 1.0, 2.0, 4.0}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5.0}, 0.9) == 5.0);
  CHECK(quantile({1.0, 2.0}, 1.0) == 2.0);
  CHECK_THROWS_AS(quantile({}, 0.5), InvalidArgument);

  const Setup s = setup();
  const SsimStats same = ssim_report(s.images, s.images);
  CHECK(same.mean == doctest::Approx(1.0));
  const auto& w = tiny::world();
  const ShiftStats z = embedding_shift_stats(w.embedder, s.images, s.images, s.untargeted);
  CHECK(z.max == 0.0);
  CHECK(!z.mean_target_distance_orig);
  const ShiftStats t = embedding_shift_stats(w.embedder, s.images, s.images, s.targeted);
  CHECK(t.mean_target_distance_orig == t.mean_target_distance_adv);
}

TEST_CASE("detectability probe averages discriminator probabilities") {
  const Setup s = setup();
  DiscriminatorSpec ds;
  ds.in_size = 16;
  ds.widths = {8, 8};
  const Discriminator d(ds, 1);
  const Detectability det = detectability_probe(d, s.images, s.images);
  CHECK(det.mean_p_orig == det.mean_p_adv);
  CHECK(det.mean_p_orig > 0.0);
  CHECK(det.mean_p_orig < 1.0);
}
