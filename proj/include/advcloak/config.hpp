#pragma once
// Run configuration: one JSON document with the sections
// {dataset, embedder, blackbox, attack, distill, eval, paths, seed}.
// User files are overlaid onto the defaults; unknown keys are rejected.
// Per-component seeds are derived from the top-level seed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/dataset.hpp"
#include "advcloak/distill.hpp"
#include "advcloak/embedder.hpp"
#include "advcloak/evaluation.hpp"
#include "advcloak/training.hpp"
#include "advcloak/tsne.hpp"

namespace advcloak {

struct DatasetSection {
  SyntheticConfig synthetic;
  SplitFractions fractions;
  SplitMode mode = SplitMode::kByIdentity;
  // Identity withheld from every split to serve as the targeted-attack
  // target; -1 picks the highest identity id.
  int target_identity = -1;
  int target_images = 4;
};

struct AblationSection {
  bool enabled = true;
  OptimizerConfig optimizer{"adam", 1e-4, 0.5, 0.999};
  double alpha = 0.1;
};

struct TargetedSection {
  bool enabled = true;
  AdvKind kind = AdvKind::kMse;
};

struct EvalSection {
  DistanceMetric metric = DistanceMetric::kEuclidean;
  // Desk-scale blur; the primitive defaults to 5x5, sigma 1.
  BlurParams blur{0.5, 3};
  std::vector<double> thresholds{0.001, 0.05, 0.1, 0.2};
  TsneConfig tsne;
};

struct PathsSection {
  std::string data_root;  // empty: $ADVCLOAK_DATA_ROOT, else <out_dir>/data
  std::string out_dir = "runs/desk";
};

struct DerivedSeeds {
  std::uint64_t synthetic, split, whitebox, blackbox, attack, targeted, distill, pairs, tsne;
};

struct RunConfig {
  DatasetSection dataset;
  EmbedderSpec embedder;
  EmbedderSpec blackbox;
  AttackConfig attack;
  AblationSection ablation;
  TargetedSection targeted;
  DistillConfig distill;
  EvalSection eval;
  PathsSection paths;
  std::uint64_t seed = 7;

  RunConfig();

  DerivedSeeds seeds() const;
  // Pushes derived seeds into the component configs.
  void apply_seeds();
  void validate() const;

  std::filesystem::path out_dir() const;
  std::filesystem::path data_dir() const;

  // Fully resolved document, seeds included.
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& user);
  // Missing or unreadable file, malformed JSON, unknown keys, wrong types and
  // invalid values all raise ConfigError.
  static RunConfig load(const std::filesystem::path& path);
};

// Throws ConfigError naming the first key of `user` absent from `schema`.
void check_known_keys(const nlohmann::json& user, const nlohmann::json& schema,
                      const std::string& where = "");

}  // namespace advcloak
