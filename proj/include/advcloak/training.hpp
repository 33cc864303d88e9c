#pragma once
// Attack training: the teacher attack model (a private copy of the embedder's
// feature blocks plus the generator), the alternating generator/discriminator
// loop, fine-tuning of the borrowed feature blocks, and single-image cloaking.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/adversary.hpp"
#include "advcloak/dataset.hpp"
#include "advcloak/embedder.hpp"
#include "advcloak/losses.hpp"

namespace advcloak {

struct OptimizerConfig {
  std::string name = "adam";
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

struct FineTuneConfig {
  bool enabled = false;
  int unfrozen_top_layers = 1;
  double lr = 1e-4;
  int epochs = 5;
};

struct AttackConfig {
  AdvLossVariant adv;
  PertLossVariant pert;
  LossWeights weights;
  bool use_discriminator = false;
  OptimizerConfig optimizer;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;
  FineTuneConfig fine_tune;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  // Feed the [-t, t]-projected perturbation to the losses during training,
  // matching what cloak() applies at inference.
  bool project_in_training = true;
  int checkpoint_every = 0;  // epochs; 0 = final checkpoint only

  // The two optimizer regimes: lr 1e-4 / beta1 0.5 with the discriminator,
  // lr 1e-3 / beta1 0.9 without.
  static AttackConfig defaults(bool use_discriminator);

  void validate() const;
  // Targets are runtime data and never serialized.
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
};

struct StepRecord {
  int epoch = 0;
  long step = 0;
  std::optional<double> l_gan;
  double l_adv = 0.0;
  double l_pert = 0.0;
  double total = 0.0;
  std::optional<double> l_disc;
};

struct TrainReport {
  std::vector<double> epoch_seconds;
  std::vector<StepRecord> steps;
  long generator_updates = 0;
  long discriminator_updates = 0;
  bool use_discriminator = false;
  std::string checkpoint;  // weights hash of the final generator

  double mean_epoch_seconds() const;
  nlohmann::json to_json() const;
  // step,epoch,[l_gan,]l_adv,l_pert,total[,l_disc]
  void write_loss_csv(const std::filesystem::path& path) const;
};

// The feature-conditioned teacher.
class AttackModel {
 public:
  AttackModel(Embedder extractor, Generator generator);

  const Embedder& extractor() const { return extractor_; }
  Embedder& extractor() { return extractor_; }
  const Generator& generator() const { return generator_; }
  Generator& generator() { return generator_; }

  // Unprojected generator output for a batch of images.
  Tensor perturb_batch(const Tensor& images) const;
  Perturbation perturb(const Image& image) const;

  // Feature blocks up to the tap plus the generator.
  std::int64_t parameter_count() const;
  std::string weights_hash() const;
  nlohmann::json manifest() const;
  void save(const std::filesystem::path& dir) const;
  static AttackModel load(const std::filesystem::path& dir);

  // Extractor blocks that fine-tuning made trainable.
  const std::vector<std::string>& tuned_blocks() const { return tuned_blocks_; }
  void set_tuned_blocks(std::vector<std::string> names) { tuned_blocks_ = std::move(names); }

 private:
  Embedder extractor_;
  Generator generator_;
  std::vector<std::string> tuned_blocks_;
};

struct AttackResult {
  AttackModel model;
  std::optional<Discriminator> discriminator;
  TrainReport report;
};

// Trains a fresh attack model against `embedder`. The embedder is copied,
// never mutated. When fine-tuning is enabled it runs after the main epochs
// and its records are appended to the report. Checkpoints go to
// `checkpoint_dir` when non-empty.
AttackResult train_attack(const Embedder& embedder, const std::vector<LabeledImage>& train_set,
                          const AttackConfig& cfg, const std::filesystem::path& checkpoint_dir = {});

// Continues training with the top `unfrozen_top_layers` feature blocks of the
// model's own extractor copy unfrozen, at fine_tune.lr. `embedder` only
// provides the loss; it is not modified.
TrainReport fine_tune(const Embedder& embedder, AttackModel& model,
                      const std::vector<LabeledImage>& train_set, const AttackConfig& cfg,
                      Discriminator* discriminator = nullptr);

// Names of the extractor blocks fine_tune() unfreezes, top first.
std::vector<std::string> fine_tune_block_names(const AttackModel& model, int unfrozen_top_layers);

// Anything producing a raw (unprojected) perturbation from an image.
class Cloaker {
 public:
  virtual ~Cloaker() = default;
  virtual std::string name() const = 0;
  virtual Tensor raw_batch(const Tensor& images) const = 0;
  Perturbation raw(const Image& image) const;
};

class TeacherCloaker final : public Cloaker {
 public:
  explicit TeacherCloaker(const AttackModel& model) : model_(model) {}
  std::string name() const override { return "teacher"; }
  Tensor raw_batch(const Tensor& images) const override { return model_.perturb_batch(images); }

 private:
  const AttackModel& model_;
};

class StudentCloaker final : public Cloaker {
 public:
  explicit StudentCloaker(const Student& student) : student_(student) {}
  std::string name() const override { return "student"; }
  Tensor raw_batch(const Tensor& images) const override { return student_.infer(images); }

 private:
  const Student& student_;
};

// delta = 0.
class ZeroCloaker final : public Cloaker {
 public:
  std::string name() const override { return "zero"; }
  Tensor raw_batch(const Tensor& images) const override { return Tensor(images.shape()); }
};

struct CloakOutput {
  Image image;
  Perturbation delta;  // projected, before clipping into [0,1]
  double seconds = 0.0;
};

// One forward pass, delta projected to [-threshold, threshold], then applied.
CloakOutput cloak(const Cloaker& cloaker, const Image& image, double threshold);
// Batched equivalent; results are identical to calling cloak() per image.
std::vector<CloakOutput> cloak_all(const Cloaker& cloaker, const std::vector<Image>& images,
                                   double threshold);

}  // namespace advcloak
