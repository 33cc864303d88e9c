#pragma once
// Attack networks: the feature-conditioned perturbation generator, the
// optional discriminator, and the compact U-Net student.

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/imaging.hpp"
#include "advcloak/nn.hpp"

namespace advcloak {

struct GeneratorSpec {
  int feature_channels = 64;
  int feature_size = 4;
  int out_channels = 3;
  int out_size = 32;
  // One nearest-x2-upsample + 3x3 conv block per entry.
  std::vector<int> widths{64, 32, 16};
  bool batch_norm = true;
  // Std-dev multiplier on the output conv's He init; 0 zero-initializes it.
  double output_init_scale = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorSpec from_json(const nlohmann::json& j);
};

struct DiscriminatorSpec {
  int in_channels = 3;
  int in_size = 32;
  std::vector<int> widths{16, 32, 64};  // stride-2 conv blocks
  double leaky_slope = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
  static DiscriminatorSpec from_json(const nlohmann::json& j);
};

struct StudentSpec {
  int channels = 3;
  int size = 32;
  // Encoder widths per resolution level; depth = widths.size().
  std::vector<int> widths{16, 24, 32};

  void validate() const;
  nlohmann::json to_json() const;
  static StudentSpec from_json(const nlohmann::json& j);
};

struct LayerCount {
  std::string kind;
  std::int64_t parameters = 0;
};

class Generator {
 public:
  Generator(GeneratorSpec spec, std::uint64_t seed);

  const GeneratorSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  Tensor forward(const Tensor& features, nn::Mode mode);
  Tensor infer(const Tensor& features) const;
  // Returns d loss / d features.
  Tensor backward(const Tensor& grad);

  std::vector<nn::Param*> params() { return net_.params(); }
  std::int64_t parameter_count() const { return net_.parameter_count(); }
  std::vector<LayerCount> layer_counts() const;
  std::vector<std::string> layer_kinds() const;
  std::vector<const Tensor*> state_tensors() const;
  std::vector<Tensor*> state_tensors();
  std::string weights_hash() const;
  nlohmann::json manifest() const;

 private:
  void check_features(const Shape& s) const;

  GeneratorSpec spec_;
  std::uint64_t seed_;
  nn::Sequential net_;
};

// Single-image evaluation-mode perturbation from a [1, F, S, S] feature map.
Perturbation generate_perturbation(const Generator& generator, const Tensor& features);

class Discriminator {
 public:
  Discriminator(DiscriminatorSpec spec, std::uint64_t seed);

  const DiscriminatorSpec& spec() const { return spec_; }

  // Logits [N, 1, 1, 1].
  Tensor forward(const Tensor& images, nn::Mode mode);
  Tensor infer(const Tensor& images) const;
  Tensor backward(const Tensor& grad_logits);
  // Probability that the image is unmodified, strictly inside (0, 1).
  double probability(const Image& image) const;
  std::vector<double> probabilities(const Tensor& images) const;

  std::vector<nn::Param*> params() { return net_.params(); }
  std::int64_t parameter_count() const { return net_.parameter_count(); }
  std::vector<LayerCount> layer_counts() const;
  std::vector<const Tensor*> state_tensors() const;
  std::vector<Tensor*> state_tensors();
  std::string weights_hash() const;
  nlohmann::json manifest() const;

 private:
  DiscriminatorSpec spec_;
  std::uint64_t seed_;
  nn::Sequential net_;
};

// Logistic function with the logit clamped to [-30, 30] so the result never
// rounds to exactly 0 or 1 in double precision.
double sigmoid_probability(double logit);

class Student {
 public:
  Student(StudentSpec spec, std::uint64_t seed);

  const StudentSpec& spec() const { return spec_; }

  Tensor forward(const Tensor& images, nn::Mode mode);
  Tensor infer(const Tensor& images) const;
  void backward(const Tensor& grad);
  Perturbation perturb(const Image& image) const;

  std::vector<nn::Param*> params();
  std::int64_t parameter_count() const;
  std::vector<LayerCount> layer_counts() const;
  std::vector<const Tensor*> state_tensors() const;
  std::vector<Tensor*> state_tensors();
  std::string weights_hash() const;
  nlohmann::json manifest() const;

 private:
  StudentSpec spec_;
  std::uint64_t seed_;
  std::vector<nn::Sequential> encoders_;  // conv-bn-relu per level
  std::vector<nn::MaxPool2> pools_;
  std::vector<nn::Upsample2> ups_;
  std::vector<nn::Sequential> decoders_;  // index l decodes into level l
  nn::Sequential output_;                 // conv + tanh
  std::vector<int> skip_channels_;        // cached concat split points
  std::vector<int> up_channels_;
};

template <typename Model>
concept ParameterCounted = requires(const Model& m) {
  { m.parameter_count() } -> std::convertible_to<std::int64_t>;
};

// Exact number of trainable scalars.
template <ParameterCounted Model>
std::int64_t count_parameters(const Model& model) {
  return model.parameter_count();
}

void save_model(const std::filesystem::path& dir, const std::string& stem,
                const std::vector<const Tensor*>& tensors, nlohmann::json manifest);
void load_model(const std::filesystem::path& dir, const std::string& stem,
                const std::vector<Tensor*>& tensors);

}  // namespace advcloak
