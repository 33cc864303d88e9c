#include "advcloak/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "advcloak/batch.hpp"
#include "advcloak/errors.hpp"

namespace advcloak {

void EvalProtocol::validate() const {
  if (targeted && !target) throw InvalidArgument("targeted protocol needs a target reference");
  auto unit = [](const Embedding& e) { return std::abs(e.norm() - 1.0) < 1e-6; };
  if (target && !unit(*target)) throw InvalidArgument("target reference must be unit-norm");
  for (const auto& [id, e] : references) {
    if (!unit(e)) throw InvalidArgument("reference of identity " + std::to_string(id) + " is not unit-norm");
  }
}

EvalProtocol make_protocol(const EmbeddingModel& model, const std::vector<LabeledImage>& clean,
                           const VerificationThreshold& th, std::optional<Embedding> target) {
  EvalProtocol p;
  p.th = th;
  p.targeted = target.has_value();
  p.target = std::move(target);
  for (const auto& [id, members] : group_by_identity(clean)) {
    std::vector<Image> images;
    for (const auto* li : members) images.push_back(li->image);
    p.references[id] = identity_reference(model, images);
  }
  p.validate();
  return p;
}

namespace {

const Embedding& reference_of(const EvalProtocol& p, int identity) {
  const auto it = p.references.find(identity);
  if (it == p.references.end()) {
    throw InvalidArgument("no reference for identity " + std::to_string(identity));
  }
  return it->second;
}

bool succeeds(const Embedding& e, int identity, const EvalProtocol& p) {
  const Embedding& own = reference_of(p, identity);
  if (p.targeted) {
    return distance(e, *p.target, p.th.metric) < distance(e, own, p.th.metric);
  }
  return !(distance(e, own, p.th.metric) < p.th.tau);
}

std::vector<Image> images_of(const std::vector<LabeledImage>& set) {
  std::vector<Image> out;
  out.reserve(set.size());
  for (const auto& li : set) out.push_back(li.image);
  return out;
}

std::vector<int> identities_of(const std::vector<LabeledImage>& set) {
  std::vector<int> out;
  out.reserve(set.size());
  for (const auto& li : set) out.push_back(li.identity_id);
  return out;
}

std::vector<Image> cloaked_images(const Cloaker& cloaker, const std::vector<LabeledImage>& set,
                                  double threshold) {
  std::vector<Image> out;
  for (auto& o : cloak_all(cloaker, images_of(set), threshold)) out.push_back(std::move(o.image));
  return out;
}

}  // namespace

bool attack_succeeds(const EmbeddingModel& model, const Image& cloaked, int identity,
                     const EvalProtocol& p) {
  return succeeds(model.embed(cloaked), identity, p);
}

double success_rate(const EmbeddingModel& model, const std::vector<Image>& cloaked,
                    const std::vector<int>& identity_of, const EvalProtocol& p) {
  p.validate();
  if (cloaked.empty()) throw InvalidArgument("success rate: empty test set");
  if (cloaked.size() != identity_of.size()) throw InvalidArgument("success rate: length mismatch");
  for (int id : identity_of) reference_of(p, id);
  const auto emb = model.embed_batch(cloaked);
  long hits = 0;
  for (std::size_t i = 0; i < emb.size(); ++i) hits += succeeds(emb[i], identity_of[i], p) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(emb.size());
}

double attack_success_rate(const EmbeddingModel& model, const Cloaker& cloaker,
                           const std::vector<LabeledImage>& test_set, const EvalProtocol& p,
                           double threshold) {
  if (test_set.empty()) throw InvalidArgument("attack_success_rate: empty test set");
  return success_rate(model, cloaked_images(cloaker, test_set, threshold), identities_of(test_set), p);
}

std::vector<Image> blur_all(const std::vector<Image>& images, const BlurParams& blur) {
  std::vector<Image> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(gaussian_blur(im, blur.sigma, blur.kernel));
  return out;
}

double robustness_under_blur(const EmbeddingModel& model, const Cloaker& cloaker,
                             const std::vector<LabeledImage>& test_set, const EvalProtocol& p,
                             double threshold, const BlurParams& blur) {
  if (test_set.empty()) throw InvalidArgument("robustness_under_blur: empty test set");
  return success_rate(model, blur_all(cloaked_images(cloaker, test_set, threshold), blur),
                      identities_of(test_set), p);
}

Detectability detectability_probe(const Discriminator& disc, const std::vector<Image>& originals,
                                  const std::vector<Image>& adversarials) {
  if (originals.empty() || adversarials.empty()) throw InvalidArgument("detectability_probe: empty set");
  auto mean_prob = [&](const std::vector<Image>& set) {
    double s = 0.0;
    for (double v : disc.probabilities(to_tensor(std::span<const Image>(set)))) s += v;
    return s / static_cast<double>(set.size());
  };
  return {mean_prob(originals), mean_prob(adversarials)};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level outside [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

nlohmann::json ShiftStats::to_json() const {
  nlohmann::json j = {{"mean", mean}, {"min", min}, {"median", median}, {"p90", p90}, {"max", max}};
  if (mean_target_distance_orig) j["mean_target_distance_orig"] = *mean_target_distance_orig;
  if (mean_target_distance_adv) j["mean_target_distance_adv"] = *mean_target_distance_adv;
  return j;
}

ShiftStats embedding_shift_stats(const EmbeddingModel& model, const std::vector<Image>& originals,
                                 const std::vector<Image>& cloaked, const EvalProtocol& p) {
  if (originals.size() != cloaked.size()) throw InvalidArgument("embedding_shift_stats: length mismatch");
  if (originals.empty()) throw InvalidArgument("embedding_shift_stats: empty input");
  p.validate();
  const auto eo = model.embed_batch(originals);
  const auto ea = model.embed_batch(cloaked);
  std::vector<double> shifts(eo.size());
  for (std::size_t i = 0; i < eo.size(); ++i) shifts[i] = distance(eo[i], ea[i], p.th.metric);
  ShiftStats s;
  double sum = 0.0;
  for (double v : shifts) sum += v;
  s.mean = sum / static_cast<double>(shifts.size());
  s.min = *std::min_element(shifts.begin(), shifts.end());
  s.max = *std::max_element(shifts.begin(), shifts.end());
  s.median = quantile(shifts, 0.5);
  s.p90 = quantile(shifts, 0.9);
  if (p.targeted) {
    double to = 0.0, ta = 0.0;
    for (std::size_t i = 0; i < eo.size(); ++i) {
      to += distance(eo[i], *p.target, p.th.metric);
      ta += distance(ea[i], *p.target, p.th.metric);
    }
    s.mean_target_distance_orig = to / static_cast<double>(eo.size());
    s.mean_target_distance_adv = ta / static_cast<double>(eo.size());
  }
  return s;
}

nlohmann::json SsimStats::to_json() const { return {{"mean", mean}, {"min", min}, {"max", max}}; }

SsimStats ssim_report(const std::vector<Image>& originals, const std::vector<Image>& cloaked,
                      const SsimParams& p) {
  if (originals.size() != cloaked.size()) throw InvalidArgument("ssim_report: length mismatch");
  if (originals.empty()) throw InvalidArgument("ssim_report: empty input");
  SsimStats s{0.0, 1.0, -1.0};
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const double v = ssim(originals[i], cloaked[i], p);
    s.mean += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean /= static_cast<double>(originals.size());
  return s;
}

}  // namespace advcloak
