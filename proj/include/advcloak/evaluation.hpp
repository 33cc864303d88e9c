#pragma once
// Measurement harness: attack success rates, blur robustness, SSIM and
// perturbation statistics, discriminator detectability, embedding shifts.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/adversary.hpp"
#include "advcloak/dataset.hpp"
#include "advcloak/embedder.hpp"
#include "advcloak/training.hpp"

namespace advcloak {

struct EvalProtocol {
  bool targeted = false;
  std::optional<Embedding> target;     // reference of the target identity
  std::map<int, Embedding> references;  // identity -> clean reference
  VerificationThreshold th;

  void validate() const;
};

// References are normalized means of each identity's clean images in `clean`.
EvalProtocol make_protocol(const EmbeddingModel& model, const std::vector<LabeledImage>& clean,
                           const VerificationThreshold& th, std::optional<Embedding> target = {});

struct BlurParams {
  double sigma = 1.0;
  int kernel = 5;
};

// One image: untargeted -> the cloaked image fails verification against its
// own reference; targeted -> it is strictly closer to the target reference
// than to its own.
bool attack_succeeds(const EmbeddingModel& model, const Image& cloaked, int identity,
                     const EvalProtocol& p);

// Batched success rate over already-cloaked images.
double success_rate(const EmbeddingModel& model, const std::vector<Image>& cloaked,
                    const std::vector<int>& identity_of, const EvalProtocol& p);

double attack_success_rate(const EmbeddingModel& model, const Cloaker& cloaker,
                           const std::vector<LabeledImage>& test_set, const EvalProtocol& p,
                           double threshold);

// As attack_success_rate, with the blur applied to each cloaked image last,
// right before embedding.
double robustness_under_blur(const EmbeddingModel& model, const Cloaker& cloaker,
                             const std::vector<LabeledImage>& test_set, const EvalProtocol& p,
                             double threshold, const BlurParams& blur);

std::vector<Image> blur_all(const std::vector<Image>& images, const BlurParams& blur);

struct Detectability {
  double mean_p_orig = 0.0;
  double mean_p_adv = 0.0;
};

Detectability detectability_probe(const Discriminator& disc, const std::vector<Image>& originals,
                                  const std::vector<Image>& adversarials);

struct ShiftStats {
  double mean = 0.0;
  double min = 0.0;
  double median = 0.0;
  double p90 = 0.0;
  double max = 0.0;
  // Targeted protocols only.
  std::optional<double> mean_target_distance_orig;
  std::optional<double> mean_target_distance_adv;

  nlohmann::json to_json() const;
};

ShiftStats embedding_shift_stats(const EmbeddingModel& model, const std::vector<Image>& originals,
                                 const std::vector<Image>& cloaked, const EvalProtocol& p);

struct SsimStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;

  nlohmann::json to_json() const;
};

SsimStats ssim_report(const std::vector<Image>& originals, const std::vector<Image>& cloaked,
                      const SsimParams& p = {});

// Linear-interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace advcloak
