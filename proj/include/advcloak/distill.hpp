#pragma once
// Distillation of the feature-conditioned teacher into the raw-image student.
// The student regresses the teacher's projected perturbation with MSE.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/adversary.hpp"
#include "advcloak/dataset.hpp"
#include "advcloak/training.hpp"

namespace advcloak {

struct DistillConfig {
  OptimizerConfig optimizer;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 3;
  StudentSpec student;
  int validation_images = 32;  // fixed batch for the per-epoch loss trace

  void validate() const;
  nlohmann::json to_json() const;
  static DistillConfig from_json(const nlohmann::json& j);
};

struct DistillReport {
  std::int64_t teacher_parameters = 0;
  std::int64_t student_parameters = 0;
  std::string teacher_hash;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_validation_loss;
  std::vector<double> epoch_seconds;

  double parameter_ratio() const;
  nlohmann::json to_json() const;
};

struct DistillResult {
  Student student;
  DistillReport report;
};

// Mean squared difference between two perturbation batches.
double perturbation_mse(const Tensor& a, const Tensor& b);

// `threshold` is the projection applied to teacher outputs before they become
// targets. The teacher is read-only.
DistillResult distill(const AttackModel& teacher, const std::vector<LabeledImage>& data,
                      const DistillConfig& cfg, double threshold);

}  // namespace advcloak
