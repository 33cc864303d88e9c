#pragma once
// Generator/discriminator loss terms with analytic gradients, in double.
//
//   L(G) = alpha * L_gan + beta * L_adv + gamma * L_pert
//
// Batch terms are arithmetic means over the batch.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advcloak/embedder.hpp"
#include "advcloak/imaging.hpp"

namespace advcloak {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 10.0;
};

enum class AdvKind { kMse, kTwoNorm, kCosine };
enum class PertKind { kThreshold, kSsim };

std::string to_string(AdvKind k);
std::string to_string(PertKind k);
AdvKind adv_kind_from_string(const std::string& s);
PertKind pert_kind_from_string(const std::string& s);

struct AdvLossVariant {
  AdvKind kind = AdvKind::kMse;
  bool targeted = false;
  std::optional<Embedding> target;  // required iff targeted

  void validate() const;
};

struct PertLossVariant {
  PertKind kind = PertKind::kThreshold;
  double threshold = 0.1;
  SsimParams ssim;

  void validate() const;
};

struct LossGradient {
  double value = 0.0;
  std::vector<double> grad;
};

// -log(p): rewards the discriminator calling the adversarial image real.
double loss_gan(double prob_on_adv);
double loss_gan_grad(double prob_on_adv);

// -log(p_real) - log(1 - p_adv), averaged over the batch.
double loss_disc(double prob_on_real, double prob_on_adv);
double loss_disc(std::span<const double> prob_on_real, std::span<const double> prob_on_adv);
struct DiscGrad {
  double d_real = 0.0;
  double d_adv = 0.0;
};
DiscGrad loss_disc_grad(double prob_on_real, double prob_on_adv);

// Raw distance D(a, b) for the given kind: mse = mean squared difference,
// two_norm = |a - b|_2, cosine = 1 - a.b (inputs assumed unit-norm).
double adv_distance(AdvKind kind, const Embedding& a, const Embedding& b);

// targeted: D(e_adv, e_ref); untargeted: -D(e_adv, e_ref). Gradient is with
// respect to e_adv.
LossGradient loss_adv(const Embedding& e_adv, const Embedding& e_ref, const AdvLossVariant& v);

// threshold: mean of max(0, |delta_i| - t)^2; ssim: dssim(x, clamp(x + delta)).
// Gradient is with respect to delta.
LossGradient loss_pert(const Image& x, const Perturbation& delta, const PertLossVariant& v);

// With no discriminator pass std::nullopt for l_gan: the alpha term is dropped.
double combined_generator_loss(const LossWeights& w, std::optional<double> l_gan, double l_adv,
                               double l_pert);

}  // namespace advcloak
