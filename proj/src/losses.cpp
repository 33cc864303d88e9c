#include "advcloak/losses.hpp"

#include <algorithm>
#include <cmath>

#include "advcloak/errors.hpp"

namespace advcloak {

std::string to_string(AdvKind k) {
  switch (k) {
    case AdvKind::kMse: return "mse";
    case AdvKind::kTwoNorm: return "two_norm";
    case AdvKind::kCosine: return "cosine";
  }
  return "?";
}

std::string to_string(PertKind k) { return k == PertKind::kThreshold ? "threshold" : "ssim"; }

AdvKind adv_kind_from_string(const std::string& s) {
  if (s == "mse") return AdvKind::kMse;
  if (s == "two_norm") return AdvKind::kTwoNorm;
  if (s == "cosine") return AdvKind::kCosine;
  throw ConfigError("unknown adversarial loss kind '" + s + "'");
}

PertKind pert_kind_from_string(const std::string& s) {
  if (s == "threshold") return PertKind::kThreshold;
  if (s == "ssim") return PertKind::kSsim;
  throw ConfigError("unknown perturbation loss kind '" + s + "'");
}

void AdvLossVariant::validate() const {
  if (targeted && !target) throw InvalidArgument("targeted adversarial loss needs a target embedding");
  if (target && std::abs(target->norm() - 1.0) > 1e-6) {
    throw InvalidArgument("target embedding must be unit-norm");
  }
}

void PertLossVariant::validate() const {
  if (kind == PertKind::kThreshold && !(threshold > 0.0 && threshold <= 1.0)) {
    throw InvalidArgument("perturbation threshold must lie in (0, 1]");
  }
  ssim.validate();
}

namespace {

void check_prob(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument(std::string(what) + ": probability outside (0,1)");
}

}  // namespace

double loss_gan(double p) {
  check_prob(p, "loss_gan");
  return -std::log(p);
}

double loss_gan_grad(double p) {
  check_prob(p, "loss_gan");
  return -1.0 / p;
}

double loss_disc(double p_real, double p_adv) {
  check_prob(p_real, "loss_disc");
  check_prob(p_adv, "loss_disc");
  return -std::log(p_real) - std::log1p(-p_adv);
}

double loss_disc(std::span<const double> p_real, std::span<const double> p_adv) {
  if (p_real.empty() || p_real.size() != p_adv.size()) {
    throw InvalidArgument("loss_disc: batches must be non-empty and equal-sized");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p_real.size(); ++i) s += loss_disc(p_real[i], p_adv[i]);
  return s / static_cast<double>(p_real.size());
}

DiscGrad loss_disc_grad(double p_real, double p_adv) {
  check_prob(p_real, "loss_disc");
  check_prob(p_adv, "loss_disc");
  return {-1.0 / p_real, 1.0 / (1.0 - p_adv)};
}

double adv_distance(AdvKind kind, const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("adversarial loss: dimension mismatch");
  double s = 0.0;
  switch (kind) {
    case AdvKind::kMse:
      for (std::size_t i = 0; i < a.dim(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
      return s / static_cast<double>(a.dim());
    case AdvKind::kTwoNorm:
      for (std::size_t i = 0; i < a.dim(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
      return std::sqrt(s);
    case AdvKind::kCosine:
      for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
      return 1.0 - s;
  }
  return 0.0;
}

LossGradient loss_adv(const Embedding& e_adv, const Embedding& e_ref, const AdvLossVariant& v) {
  v.validate();
  if (e_adv.dim() != e_ref.dim()) throw InvalidArgument("adversarial loss: dimension mismatch");
  const std::size_t d = e_adv.dim();
  LossGradient out;
  out.value = adv_distance(v.kind, e_adv, e_ref);
  out.grad.assign(d, 0.0);
  switch (v.kind) {
    case AdvKind::kMse:
      for (std::size_t i = 0; i < d; ++i) {
        out.grad[i] = 2.0 * (e_adv.values[i] - e_ref.values[i]) / static_cast<double>(d);
      }
      break;
    case AdvKind::kTwoNorm:
      // Subgradient 0 at coincidence.
      if (out.value > 0.0) {
        for (std::size_t i = 0; i < d; ++i) out.grad[i] = (e_adv.values[i] - e_ref.values[i]) / out.value;
      }
      break;
    case AdvKind::kCosine:
      for (std::size_t i = 0; i < d; ++i) out.grad[i] = -e_ref.values[i];
      break;
  }
  if (!v.targeted) {
    out.value = -out.value;
    for (double& g : out.grad) g = -g;
  }
  return out;
}

LossGradient loss_pert(const Image& x, const Perturbation& delta, const PertLossVariant& v) {
  v.validate();
  if (!x.same_shape(delta)) throw InvalidArgument("loss_pert: shape mismatch");
  LossGradient out;
  const std::size_t n = delta.data.size();
  out.grad.assign(n, 0.0);
  if (v.kind == PertKind::kThreshold) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double excess = std::abs(delta.data[i]) - v.threshold;
      if (excess > 0.0) {
        s += excess * excess;
        out.grad[i] = 2.0 * excess * (delta.data[i] > 0.0 ? 1.0 : -1.0) / static_cast<double>(n);
      }
    }
    out.value = s / static_cast<double>(n);
    return out;
  }
  const Image y = apply_perturbation(x, delta);
  const SsimGradient sg = ssim_with_gradient(x, y, v.ssim);
  out.value = (1.0 - sg.value) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = x.data[i] + delta.data[i];
    const bool inside = raw > 0.0 && raw < 1.0;
    out.grad[i] = inside ? -0.5 * sg.grad_b[i] : 0.0;
  }
  return out;
}

double combined_generator_loss(const LossWeights& w, std::optional<double> l_gan, double l_adv,
                               double l_pert) {
  double total = w.beta * l_adv + w.gamma * l_pert;
  if (l_gan) total += w.alpha * *l_gan;
  return total;
}

}  // namespace advcloak
