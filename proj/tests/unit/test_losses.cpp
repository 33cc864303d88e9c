#include <doctest.h>

#include <cmath>

#include "advcloak/errors.hpp"
#include "advcloak/losses.hpp"
#include "checks.hpp"

using namespace advcloak;

TEST_CASE("every loss term matches central differences") {
  const checks::GradientSweep s = checks::gradient_sweep();
  CHECK(s.terms == 10);
  CHECK(s.checks > 200);
  CHECK(s.worst_rel < 1e-3);
}

TEST_CASE("gan and discriminator losses") {
  CHECK(loss_gan(0.5) == doctest::Approx(std::log(2.0)));
  CHECK(loss_disc(0.5, 0.5) == doctest::Approx(2.0 * std::log(2.0)));
  const std::vector<double> pr{0.9, 0.6}, pa{0.2, 0.3};
  CHECK(loss_disc(pr, pa) == doctest::Approx((loss_disc(0.9, 0.2) + loss_disc(0.6, 0.3)) / 2.0));
  CHECK_THROWS_AS(loss_gan(0.0), InvalidArgument);
  CHECK_THROWS_AS(loss_gan(1.0), InvalidArgument);
  CHECK_THROWS_AS(loss_disc(0.5, 1.0), InvalidArgument);
  CHECK_THROWS_AS(loss_disc(std::vector<double>{}, std::vector<double>{}), InvalidArgument);
}

TEST_CASE("adversarial distances") {
  const Embedding a{{1.0, 0.0}}, b{{0.0, 1.0}};
  CHECK(adv_distance(AdvKind::kMse, a, b) == doctest::Approx(1.0));
  CHECK(adv_distance(AdvKind::kTwoNorm, a, b) == doctest::Approx(std::sqrt(2.0)));
  CHECK(adv_distance(AdvKind::kCosine, a, b) == doctest::Approx(1.0));
  CHECK(adv_distance(AdvKind::kCosine, a, a) == doctest::Approx(0.0));

  AdvLossVariant untargeted{AdvKind::kMse, false, std::nullopt};
  CHECK(loss_adv(a, b, untargeted).value == doctest::Approx(-1.0));
  AdvLossVariant targeted{AdvKind::kMse, true, b};
  CHECK(loss_adv(a, b, targeted).value == doctest::Approx(1.0));

  AdvLossVariant missing{AdvKind::kMse, true, std::nullopt};
  CHECK_THROWS_AS(loss_adv(a, b, missing), InvalidArgument);
  AdvLossVariant bad{AdvKind::kMse, true, Embedding{{2.0, 0.0}}};
  CHECK_THROWS_AS(loss_adv(a, b, bad), InvalidArgument);

  AdvLossVariant two{AdvKind::kTwoNorm, false, std::nullopt};
  for (double g : loss_adv(a, a, two).grad) CHECK(g == 0.0);
}

TEST_CASE("perturbation losses") {
  const Image x(8, 8, 1, 0.5);
  PertLossVariant thr{PertKind::kThreshold, 0.1, {}};
  CHECK(loss_pert(x, Perturbation(8, 8, 1, 0.05), thr).value == 0.0);
  const double v = loss_pert(x, Perturbation(8, 8, 1, -0.3), thr).value;
  CHECK(v == doctest::Approx(0.04));

  PertLossVariant s{PertKind::kSsim, 0.1, {}};
  s.ssim.window_size = 7;
  CHECK(loss_pert(x, Perturbation(8, 8, 1, 0.0), s).value == doctest::Approx(0.0));

  PertLossVariant bad{PertKind::kThreshold, 0.0, {}};
  CHECK_THROWS_AS(loss_pert(x, Perturbation(8, 8, 1), bad), InvalidArgument);
  CHECK_THROWS_AS(loss_pert(x, Perturbation(8, 7, 1), thr), InvalidArgument);
}

TEST_CASE("combined generator loss drops alpha without a discriminator") {
  const LossWeights w{2.0, 3.0, 5.0};
  CHECK(combined_generator_loss(w, 1.0, 1.0, 1.0) == doctest::Approx(10.0));
  CHECK(combined_generator_loss(w, std::nullopt, 1.0, 1.0) == doctest::Approx(8.0));
}

TEST_CASE("loss kinds round-trip through names") {
  for (AdvKind k : {AdvKind::kMse, AdvKind::kTwoNorm, AdvKind::kCosine}) {
    CHECK(adv_kind_from_string(to_string(k)) == k);
  }
  CHECK(pert_kind_from_string("ssim") == PertKind::kSsim);
  CHECK_THROWS_AS(adv_kind_from_string("l1"), ConfigError);
  CHECK_THROWS_AS(pert_kind_from_string("lpips"), ConfigError);
}
