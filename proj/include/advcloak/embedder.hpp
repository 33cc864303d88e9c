#pragma once
// Toy face-embedding networks and the verification protocol built on them.
//
// Architecture: conv blocks (3x3 conv, batch norm, ReLU, 2x2 max-pool after
// every block but the last), global average pooling, a dense projection to
// the embedding, and a classifier head used only during training. Embeddings
// are the L2-normalized projection output.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcloak/dataset.hpp"
#include "advcloak/imaging.hpp"
#include "advcloak/nn.hpp"

namespace advcloak {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
  bool operator==(const Embedding&) const = default;
};

Embedding normalized(const Embedding& e);

enum class DistanceMetric { kEuclidean, kCosine };

std::string to_string(DistanceMetric m);
DistanceMetric distance_metric_from_string(const std::string& s);
double distance(const Embedding& a, const Embedding& b, DistanceMetric metric);

struct EmbedderTrainConfig {
  int epochs = 15;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct EmbedderSpec {
  std::string name = "whitebox";
  int input_size = 32;
  int channels = 3;
  std::vector<int> widths{16, 32, 64, 64};
  int embedding_dim = 32;
  // Block whose activation (before pooling) feeds the generator; -1 = last.
  int feature_tap = -1;
  EmbedderTrainConfig train;

  void validate() const;
  int resolved_tap() const { return feature_tap < 0 ? static_cast<int>(widths.size()) - 1 : feature_tap; }
  nlohmann::json to_json() const;
  static EmbedderSpec from_json(const nlohmann::json& j);
};

// Anything that maps an image to a unit embedding.
class EmbeddingModel {
 public:
  virtual ~EmbeddingModel() = default;
  virtual Embedding embed(const Image& image) const = 0;
  virtual std::vector<Embedding> embed_batch(const std::vector<Image>& images) const;
};

class Embedder final : public EmbeddingModel {
 public:
  Embedder(EmbedderSpec spec, int num_classes);
  Embedder(const Embedder& other);
  Embedder& operator=(const Embedder& other);

  const EmbedderSpec& spec() const { return spec_; }
  int num_classes() const { return num_classes_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  // [1, F, S, S] at the feature tap.
  Shape feature_shape() const;

  Embedding embed(const Image& image) const override;
  std::vector<Embedding> embed_batch(const std::vector<Image>& images) const override;
  Tensor extract_features(const Image& image) const;

  // Batched read-only evaluation.
  Tensor features_infer(const Tensor& x) const;
  Tensor embed_infer(const Tensor& x) const;

  // Training paths: forward caches activations, backward returns d/d input.
  Tensor forward_features(const Tensor& x, nn::Mode mode);
  Tensor backward_features(const Tensor& grad);
  Tensor forward_embedding(const Tensor& x, nn::Mode mode);  // normalized [N, d, 1, 1]
  Tensor backward_embedding(const Tensor& grad);
  Tensor forward_logits(const Tensor& x, nn::Mode mode);
  Tensor backward_logits(const Tensor& grad);

  std::vector<nn::Param*> params();
  std::vector<nn::Param*> block_params(int block);
  std::vector<nn::Param*> embedding_params();  // everything except the classifier
  void set_frozen(bool frozen);
  void set_block_frozen(int block, bool frozen);

  std::int64_t parameter_count() const;  // embedding path only
  std::int64_t feature_parameter_count() const;  // blocks up to the tap
  std::vector<const Tensor*> state_tensors() const;
  std::vector<Tensor*> state_tensors();
  std::string weights_hash() const;

  // Counts every public evaluation or training forward call.
  long forward_calls() const { return calls_.load(); }

  nlohmann::json manifest() const;
  void save(const std::filesystem::path& dir) const;
  static Embedder load(const std::filesystem::path& dir);

 private:
  struct Block {
    nn::Sequential body;
    bool pool = false;
    nn::MaxPool2 pool_layer;
  };

  void check_input(const Shape& s) const;
  Tensor run_blocks_infer(const Tensor& x, int first, int last) const;
  Tensor head_infer_from(const Tensor& tap_out) const;

  EmbedderSpec spec_;
  int num_classes_;
  std::vector<Block> blocks_;
  nn::Sequential head_;        // global pool + projection
  nn::Sequential classifier_;  // training-only head
  Tensor raw_embedding_;       // cache for normalization backward
  int forwarded_blocks_ = 0;   // how far the last training forward went
  mutable std::atomic<long> calls_{0};
};

Embedder train_embedder(const std::vector<LabeledImage>& train_set, const EmbedderSpec& spec);

struct VerificationThreshold {
  double tau = 0.0;
  DistanceMetric metric = DistanceMetric::kEuclidean;
  double eer = 0.0;
};

struct EerResult {
  double tau = 0.0;
  double eer = 0.0;
  double fmr = 0.0;
  double fnmr = 0.0;
};

// Equal-error-rate operating point over the midpoints between consecutive
// distinct pooled distances. A pair matches when distance < tau. The chosen
// midpoint minimizes |FMR - FNMR|, then FMR + FNMR, then tau.
EerResult eer_threshold(const std::vector<double>& genuine, const std::vector<double>& impostor);

struct VerificationPairs {
  std::vector<std::pair<std::size_t, std::size_t>> genuine;
  std::vector<std::pair<std::size_t, std::size_t>> impostor;
};

// All same-identity pairs plus an equal number of different-identity pairs
// sampled without replacement under `seed`.
VerificationPairs make_verification_pairs(const std::vector<int>& identity_of, std::uint64_t seed);

VerificationThreshold calibrate_threshold(const EmbeddingModel& model,
                                          const std::vector<LabeledImage>& val_set,
                                          DistanceMetric metric, std::uint64_t seed = 0);

// Fraction of pairs classified correctly at the given threshold.
double verification_accuracy(const EmbeddingModel& model, const std::vector<LabeledImage>& set,
                             const VerificationThreshold& th, std::uint64_t seed = 0);

Embedding identity_reference(const EmbeddingModel& model, const std::vector<Image>& images);
bool verify(const EmbeddingModel& model, const Image& image, const Embedding& reference,
            const VerificationThreshold& th);

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingModel& model,
                          const std::vector<LabeledImage>& data);

}  // namespace advcloak
