#pragma once
// End-to-end stages behind the CLI. Every stage reads its inputs from disk
// (the dataset is always reloaded from PNG), writes its outputs plus the
// resolved config and input hashes into its own directory, and raises
// MissingArtifact when an upstream output is absent.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/config.hpp"

namespace advcloak {

struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path whitebox() const { return root / "whitebox"; }
  std::filesystem::path blackbox() const { return root / "blackbox"; }
  std::filesystem::path attack() const { return root / "attack"; }
  std::filesystem::path ablation() const { return root / "attack_disc"; }
  std::filesystem::path targeted() const { return root / "attack_targeted"; }
  std::filesystem::path student() const { return root / "student"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path visual() const { return root / "visual"; }
};

// Dataset splits with the target identity removed from all of them.
struct PreparedData {
  DatasetSplits splits;
  std::vector<LabeledImage> targets;
  int target_identity = -1;
};

PreparedData load_prepared(const RunConfig& cfg);

void stage_synth_data(const RunConfig& cfg);
// which: whitebox | blackbox | both
void stage_train_embedder(const RunConfig& cfg, const std::string& which = "both");
// variant: main | ablation | targeted | all (all honours the enabled flags)
void stage_train_attack(const RunConfig& cfg, const std::string& variant = "all");
void stage_distill(const RunConfig& cfg);
nlohmann::json stage_evaluate(const RunConfig& cfg);
nlohmann::json stage_visualize(const RunConfig& cfg);

struct CloakFileResult {
  double seconds = 0.0;
  double linf = 0.0;
};

// model: teacher | student. Input must match the embedder's input shape.
CloakFileResult stage_cloak(const RunConfig& cfg, const std::filesystem::path& in,
                            const std::filesystem::path& out, const std::string& model,
                            double threshold);

// synth-data -> train-embedder (both) -> train-attack -> distill -> evaluate
// -> visualize. Returns the evaluation report.
nlohmann::json run_pipeline(const RunConfig& cfg);

}  // namespace advcloak
