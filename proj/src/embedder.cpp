#include "advcloak/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "advcloak/batch.hpp"
#include "advcloak/checkpoint.hpp"
#include "advcloak/errors.hpp"

namespace advcloak {

double Embedding::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

Embedding normalized(const Embedding& e) {
  const double n = e.norm();
  if (!(n > 0.0)) throw InvalidArgument("cannot normalize a zero embedding");
  Embedding out = e;
  for (double& v : out.values) v /= n;
  return out;
}

std::string to_string(DistanceMetric m) {
  return m == DistanceMetric::kEuclidean ? "euclidean" : "cosine";
}

DistanceMetric distance_metric_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceMetric::kEuclidean;
  if (s == "cosine") return DistanceMetric::kCosine;
  throw ConfigError("unknown distance metric '" + s + "'");
}

double distance(const Embedding& a, const Embedding& b, DistanceMetric metric) {
  if (a.dim() != b.dim()) throw InvalidArgument("distance: dimension mismatch");
  double s = 0.0;
  if (metric == DistanceMetric::kEuclidean) {
    for (std::size_t i = 0; i < a.dim(); ++i) {
      const double d = a.values[i] - b.values[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
  return 1.0 - s;
}

// ------------------------------------------------------------------ spec

void EmbedderSpec::validate() const {
  if (widths.empty()) throw InvalidArgument("embedder spec: no conv blocks");
  if (embedding_dim < 8) throw InvalidArgument("embedder spec: embedding_dim must be >= 8");
  if (channels != 1 && channels != 3) throw InvalidArgument("embedder spec: channels must be 1 or 3");
  const int tap = resolved_tap();
  if (tap < 0 || tap >= static_cast<int>(widths.size())) {
    throw InvalidArgument("embedder spec: feature_tap out of range");
  }
  int size = input_size;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) size /= 2;
  if (size < 1 || input_size % (1 << (widths.size() - 1)) != 0) {
    throw InvalidArgument("embedder spec: input size not divisible by the pooling stages");
  }
  if (train.epochs < 1 || train.batch_size < 1 || !(train.lr > 0.0)) {
    throw InvalidArgument("embedder spec: invalid training config");
  }
}

nlohmann::json EmbedderSpec::to_json() const {
  return {{"name", name},
          {"input_size", input_size},
          {"channels", channels},
          {"widths", widths},
          {"embedding_dim", embedding_dim},
          {"feature_tap", feature_tap},
          {"train",
           {{"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"lr", train.lr},
            {"seed", train.seed}}}};
}

EmbedderSpec EmbedderSpec::from_json(const nlohmann::json& j) {
  EmbedderSpec s;
  s.name = j.at("name").get<std::string>();
  s.input_size = j.at("input_size").get<int>();
  s.channels = j.at("channels").get<int>();
  s.widths = j.at("widths").get<std::vector<int>>();
  s.embedding_dim = j.at("embedding_dim").get<int>();
  s.feature_tap = j.at("feature_tap").get<int>();
  const auto& t = j.at("train");
  s.train.epochs = t.at("epochs").get<int>();
  s.train.batch_size = t.at("batch_size").get<int>();
  s.train.lr = t.at("lr").get<double>();
  s.train.seed = t.at("seed").get<std::uint64_t>();
  return s;
}

std::vector<Embedding> EmbeddingModel::embed_batch(const std::vector<Image>& images) const {
  std::vector<Embedding> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(embed(im));
  return out;
}

// -------------------------------------------------------------- Embedder

Embedder::Embedder(EmbedderSpec spec, int num_classes)
    : spec_(std::move(spec)), num_classes_(num_classes) {
  spec_.validate();
  if (num_classes_ < 2) throw InvalidArgument("embedder needs at least 2 classes");
  nn::Rng rng(spec_.train.seed);
  int in = spec_.channels;
  const int last = static_cast<int>(spec_.widths.size()) - 1;
  for (int i = 0; i <= last; ++i) {
    Block b;
    b.body.add<nn::Conv2d>(in, spec_.widths[i], 3, 1, 1, rng);
    b.body.add<nn::BatchNorm2d>(spec_.widths[i]);
    b.body.add<nn::ReLU>();
    b.pool = i < last;
    blocks_.push_back(std::move(b));
    in = spec_.widths[i];
  }
  head_.add<nn::GlobalAvgPool>();
  head_.add<nn::Dense>(in, spec_.embedding_dim, rng);
  classifier_.add<nn::Dense>(spec_.embedding_dim, num_classes_, rng);
}

Embedder::Embedder(const Embedder& other)
    : spec_(other.spec_),
      num_classes_(other.num_classes_),
      blocks_(other.blocks_),
      head_(other.head_),
      classifier_(other.classifier_),
      raw_embedding_(other.raw_embedding_),
      forwarded_blocks_(other.forwarded_blocks_) {}

Embedder& Embedder::operator=(const Embedder& other) {
  if (this != &other) {
    spec_ = other.spec_;
    num_classes_ = other.num_classes_;
    blocks_ = other.blocks_;
    head_ = other.head_;
    classifier_ = other.classifier_;
    raw_embedding_ = other.raw_embedding_;
    forwarded_blocks_ = other.forwarded_blocks_;
  }
  return *this;
}

Shape Embedder::feature_shape() const {
  Shape s{1, spec_.channels, spec_.input_size, spec_.input_size};
  const int tap = spec_.resolved_tap();
  for (int i = 0; i <= tap; ++i) {
    s = blocks_[i].body.output_shape(s);
    if (i < tap && blocks_[i].pool) s = blocks_[i].pool_layer.output_shape(s);
  }
  return s;
}

void Embedder::check_input(const Shape& s) const {
  if (s.c != spec_.channels || s.h != spec_.input_size || s.w != spec_.input_size) {
    throw InvalidArgument("embedder '" + spec_.name + "' expects " + std::to_string(spec_.channels) +
                          "x" + std::to_string(spec_.input_size) + "x" +
                          std::to_string(spec_.input_size) + " input, got " + s.str());
  }
}

Tensor Embedder::run_blocks_infer(const Tensor& x, int first, int last) const {
  Tensor h = x;
  for (int i = first; i <= last; ++i) {
    h = blocks_[i].body.infer(h);
    if (i < last && blocks_[i].pool) h = blocks_[i].pool_layer.infer(h);
  }
  return h;
}

Tensor Embedder::head_infer_from(const Tensor& block_out) const {
  return head_.infer(block_out);
}

Tensor Embedder::features_infer(const Tensor& x) const {
  check_input(x.shape());
  ++calls_;
  return run_blocks_infer(x, 0, spec_.resolved_tap());
}

namespace {

Tensor normalize_rows(const Tensor& raw) {
  Tensor out(raw.shape());
  const std::size_t d = raw.shape().sample_size();
  for (int i = 0; i < raw.n(); ++i) {
    auto r = raw.sample(i);
    double s = 0.0;
    for (float v : r) s += static_cast<double>(v) * v;
    const double inv = 1.0 / std::max(std::sqrt(s), 1e-12);
    auto o = out.sample(i);
    for (std::size_t k = 0; k < d; ++k) o[k] = static_cast<float>(r[k] * inv);
  }
  return out;
}

}  // namespace

Tensor Embedder::embed_infer(const Tensor& x) const {
  check_input(x.shape());
  ++calls_;
  const int last = static_cast<int>(blocks_.size()) - 1;
  return normalize_rows(head_infer_from(run_blocks_infer(x, 0, last)));
}

Embedding Embedder::embed(const Image& image) const {
  const Tensor e = embed_infer(to_tensor(image));
  Embedding out;
  out.values.assign(e.data(), e.data() + e.size());
  return out;
}

std::vector<Embedding> Embedder::embed_batch(const std::vector<Image>& images) const {
  std::vector<Embedding> out;
  out.reserve(images.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t end = std::min(images.size(), start + kChunk);
    const Tensor e = embed_infer(to_tensor(std::span<const Image>(images.data() + start, end - start)));
    for (int i = 0; i < e.n(); ++i) {
      auto s = e.sample(i);
      out.push_back(Embedding{std::vector<double>(s.begin(), s.end())});
    }
  }
  return out;
}

Tensor Embedder::extract_features(const Image& image) const {
  return features_infer(to_tensor(image));
}

Tensor Embedder::forward_features(const Tensor& x, nn::Mode mode) {
  check_input(x.shape());
  ++calls_;
  const int tap = spec_.resolved_tap();
  Tensor h = x;
  for (int i = 0; i <= tap; ++i) {
    h = blocks_[i].body.forward(h, mode);
    if (i < tap && blocks_[i].pool) h = blocks_[i].pool_layer.forward(h, mode);
  }
  forwarded_blocks_ = tap + 1;
  return h;
}

Tensor Embedder::backward_features(const Tensor& grad) {
  const int tap = spec_.resolved_tap();
  Tensor g = grad;
  for (int i = tap; i >= 0; --i) {
    if (i < tap && blocks_[i].pool) g = blocks_[i].pool_layer.backward(g);
    g = blocks_[i].body.backward(g);
  }
  return g;
}

Tensor Embedder::forward_embedding(const Tensor& x, nn::Mode mode) {
  check_input(x.shape());
  ++calls_;
  const int last = static_cast<int>(blocks_.size()) - 1;
  Tensor h = x;
  for (int i = 0; i <= last; ++i) {
    h = blocks_[i].body.forward(h, mode);
    if (i < last && blocks_[i].pool) h = blocks_[i].pool_layer.forward(h, mode);
  }
  raw_embedding_ = head_.forward(h, mode);
  forwarded_blocks_ = last + 1;
  return normalize_rows(raw_embedding_);
}

Tensor Embedder::backward_embedding(const Tensor& grad) {
  // e = r / |r|  =>  de/dr^T g = (g - e (e . g)) / |r|
  Tensor g_raw(raw_embedding_.shape());
  const std::size_t d = raw_embedding_.shape().sample_size();
  for (int i = 0; i < raw_embedding_.n(); ++i) {
    auto r = raw_embedding_.sample(i);
    auto gi = grad.sample(i);
    double s = 0.0;
    for (float v : r) s += static_cast<double>(v) * v;
    const double n = std::max(std::sqrt(s), 1e-12);
    double eg = 0.0;
    for (std::size_t k = 0; k < d; ++k) eg += (r[k] / n) * gi[k];
    auto o = g_raw.sample(i);
    for (std::size_t k = 0; k < d; ++k) o[k] = static_cast<float>((gi[k] - (r[k] / n) * eg) / n);
  }
  Tensor g = head_.backward(g_raw);
  const int last = static_cast<int>(blocks_.size()) - 1;
  for (int i = last; i >= 0; --i) {
    if (i < last && blocks_[i].pool) g = blocks_[i].pool_layer.backward(g);
    g = blocks_[i].body.backward(g);
  }
  return g;
}

Tensor Embedder::forward_logits(const Tensor& x, nn::Mode mode) {
  forward_embedding(x, mode);
  return classifier_.forward(raw_embedding_, mode);
}

Tensor Embedder::backward_logits(const Tensor& grad) {
  Tensor g = head_.backward(classifier_.backward(grad));
  const int last = static_cast<int>(blocks_.size()) - 1;
  for (int i = last; i >= 0; --i) {
    if (i < last && blocks_[i].pool) g = blocks_[i].pool_layer.backward(g);
    g = blocks_[i].body.backward(g);
  }
  return g;
}

std::vector<nn::Param*> Embedder::params() {
  auto out = embedding_params();
  auto c = classifier_.params();
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<nn::Param*> Embedder::embedding_params() {
  std::vector<nn::Param*> out;
  for (auto& b : blocks_) {
    auto p = b.body.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto h = head_.params();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

std::vector<nn::Param*> Embedder::block_params(int block) {
  if (block < 0 || block >= block_count()) throw InvalidArgument("block index out of range");
  return blocks_[block].body.params();
}

void Embedder::set_frozen(bool frozen) {
  for (auto& b : blocks_) b.body.set_frozen(frozen);
  head_.set_frozen(frozen);
  classifier_.set_frozen(frozen);
}

void Embedder::set_block_frozen(int block, bool frozen) {
  if (block < 0 || block >= block_count()) throw InvalidArgument("block index out of range");
  blocks_[block].body.set_frozen(frozen);
}

std::int64_t Embedder::parameter_count() const {
  std::int64_t n = head_.parameter_count();
  for (const auto& b : blocks_) n += b.body.parameter_count();
  return n;
}

std::int64_t Embedder::feature_parameter_count() const {
  std::int64_t n = 0;
  for (int i = 0; i <= spec_.resolved_tap(); ++i) n += blocks_[i].body.parameter_count();
  return n;
}

std::vector<const Tensor*> Embedder::state_tensors() const {
  std::vector<const Tensor*> out;
  auto add = [&out](const nn::Sequential& s) {
    for (const nn::Param* p : s.params()) out.push_back(&p->value);
    for (const Tensor* t : s.buffers()) out.push_back(t);
  };
  for (const auto& b : blocks_) add(b.body);
  add(head_);
  add(classifier_);
  return out;
}

std::vector<Tensor*> Embedder::state_tensors() {
  const auto c = static_cast<const Embedder&>(*this).state_tensors();
  std::vector<Tensor*> out;
  for (const Tensor* t : c) out.push_back(const_cast<Tensor*>(t));
  return out;
}

std::string Embedder::weights_hash() const { return advcloak::weights_hash(state_tensors()); }

nlohmann::json Embedder::manifest() const {
  const Shape fs = feature_shape();
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : blocks_) blocks.push_back({{"layers", b.body.describe()}, {"pool", b.pool}});
  return {{"kind", "embedder"},
          {"spec", spec_.to_json()},
          {"num_classes", num_classes_},
          {"feature_tap", spec_.resolved_tap()},
          {"feature_shape", {fs.c, fs.h, fs.w}},
          {"parameter_count", parameter_count()},
          {"architecture", {{"blocks", blocks}, {"head", head_.describe()}}}};
}

void Embedder::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_weights(dir / "weights.bin", state_tensors());
  auto m = manifest();
  m["weights_sha256"] = sha256_file(dir / "weights.bin");
  write_json(dir / "manifest.json", m);
}

Embedder Embedder::load(const std::filesystem::path& dir) {
  const auto m = read_json(dir / "manifest.json");
  if (m.at("kind") != "embedder") throw std::runtime_error("not an embedder checkpoint: " + dir.string());
  Embedder e(EmbedderSpec::from_json(m.at("spec")), m.at("num_classes").get<int>());
  read_weights(dir / "weights.bin", e.state_tensors());
  return e;
}

// -------------------------------------------------------------- training

Embedder train_embedder(const std::vector<LabeledImage>& train_set, const EmbedderSpec& spec) {
  std::map<int, int> class_of;
  for (const auto& li : train_set) class_of.emplace(li.identity_id, 0);
  if (class_of.size() < 2) throw InvalidArgument("train_embedder: need at least 2 identities");
  int next = 0;
  for (auto& [id, cls] : class_of) cls = next++;

  Embedder model(spec, static_cast<int>(class_of.size()));
  nn::Adam opt(model.params(), {spec.train.lr, 0.9, 0.999, 1e-7});
  std::vector<std::size_t> order(train_set.size());
  std::vector<Image> batch_images;
  std::vector<int> labels;
  for (int epoch = 0; epoch < spec.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    deterministic_shuffle(order, spec.train.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t start = 0; start < order.size(); start += spec.train.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(spec.train.batch_size));
      if (end - start < 2) continue;  // batch norm needs more than one sample
      batch_images.clear();
      labels.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_images.push_back(train_set[order[k]].image);
        labels.push_back(class_of.at(train_set[order[k]].identity_id));
      }
      const Tensor logits = model.forward_logits(to_tensor(batch_images), nn::Mode::kTrain);
      Tensor grad;
      nn::softmax_cross_entropy(logits, labels, grad);
      model.backward_logits(grad);
      opt.step();
    }
  }
  return model;
}

// ---------------------------------------------------------- verification

EerResult eer_threshold(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  if (genuine.empty()) throw InvalidArgument("eer_threshold: no genuine pairs");
  if (impostor.empty()) throw InvalidArgument("eer_threshold: no impostor pairs");
  std::vector<double> g = genuine, im = impostor, pooled;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  pooled.reserve(g.size() + im.size());
  std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(pooled));
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
  if (pooled.size() < 2) throw InvalidArgument("eer_threshold: distances are all identical");

  EerResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  double best_sum = std::numeric_limits<double>::infinity();
  std::size_t gi = 0, ii = 0;  // counts of values below the candidate
  for (std::size_t k = 0; k + 1 < pooled.size(); ++k) {
    const double tau = 0.5 * (pooled[k] + pooled[k + 1]);
    while (gi < g.size() && g[gi] < tau) ++gi;
    while (ii < im.size() && im[ii] < tau) ++ii;
    const double fnmr = static_cast<double>(g.size() - gi) / static_cast<double>(g.size());
    const double fmr = static_cast<double>(ii) / static_cast<double>(im.size());
    const double gap = std::abs(fmr - fnmr);
    const double sum = fmr + fnmr;
    if (gap < best_gap || (gap == best_gap && sum < best_sum)) {
      best_gap = gap;
      best_sum = sum;
      best = {tau, 0.5 * sum, fmr, fnmr};
    }
  }
  return best;
}

VerificationPairs make_verification_pairs(const std::vector<int>& identity_of, std::uint64_t seed) {
  VerificationPairs out;
  std::vector<std::pair<std::size_t, std::size_t>> impostor_all;
  for (std::size_t i = 0; i < identity_of.size(); ++i) {
    for (std::size_t j = i + 1; j < identity_of.size(); ++j) {
      if (identity_of[i] == identity_of[j]) {
        out.genuine.emplace_back(i, j);
      } else {
        impostor_all.emplace_back(i, j);
      }
    }
  }
  std::vector<std::size_t> order(impostor_all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  deterministic_shuffle(order, seed);
  const std::size_t take = std::min(out.genuine.size(), impostor_all.size());
  for (std::size_t k = 0; k < take; ++k) out.impostor.push_back(impostor_all[order[k]]);
  return out;
}

namespace {

struct PairDistances {
  std::vector<double> genuine, impostor;
};

PairDistances pair_distances(const EmbeddingModel& model, const std::vector<LabeledImage>& set,
                             DistanceMetric metric, std::uint64_t seed) {
  std::vector<Image> images;
  std::vector<int> ids;
  for (const auto& li : set) {
    images.push_back(li.image);
    ids.push_back(li.identity_id);
  }
  const auto emb = model.embed_batch(images);
  const auto pairs = make_verification_pairs(ids, seed);
  PairDistances d;
  for (auto [i, j] : pairs.genuine) d.genuine.push_back(distance(emb[i], emb[j], metric));
  for (auto [i, j] : pairs.impostor) d.impostor.push_back(distance(emb[i], emb[j], metric));
  return d;
}

}  // namespace

VerificationThreshold calibrate_threshold(const EmbeddingModel& model,
                                          const std::vector<LabeledImage>& val_set,
                                          DistanceMetric metric, std::uint64_t seed) {
  const auto d = pair_distances(model, val_set, metric, seed);
  if (d.genuine.empty()) throw InvalidArgument("calibrate_threshold: no genuine pairs");
  const auto r = eer_threshold(d.genuine, d.impostor);
  return {r.tau, metric, r.eer};
}

double verification_accuracy(const EmbeddingModel& model, const std::vector<LabeledImage>& set,
                             const VerificationThreshold& th, std::uint64_t seed) {
  const auto d = pair_distances(model, set, th.metric, seed);
  std::size_t correct = 0;
  for (double v : d.genuine) correct += v < th.tau ? 1 : 0;
  for (double v : d.impostor) correct += v < th.tau ? 0 : 1;
  const std::size_t total = d.genuine.size() + d.impostor.size();
  if (total == 0) throw InvalidArgument("verification_accuracy: no pairs");
  return static_cast<double>(correct) / static_cast<double>(total);
}

Embedding identity_reference(const EmbeddingModel& model, const std::vector<Image>& images) {
  if (images.empty()) throw InvalidArgument("identity_reference: no images");
  const auto emb = model.embed_batch(images);
  Embedding mean{std::vector<double>(emb.front().dim(), 0.0)};
  for (const auto& e : emb) {
    for (std::size_t k = 0; k < e.dim(); ++k) mean.values[k] += e.values[k];
  }
  for (double& v : mean.values) v /= static_cast<double>(emb.size());
  return normalized(mean);
}

bool verify(const EmbeddingModel& model, const Image& image, const Embedding& reference,
            const VerificationThreshold& th) {
  return distance(model.embed(image), reference, th.metric) < th.tau;
}

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingModel& model,
                          const std::vector<LabeledImage>& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  std::vector<Image> images;
  for (const auto& li : data) images.push_back(li.image);
  const auto emb = model.embed_batch(images);
  f.precision(9);
  for (std::size_t i = 0; i < data.size(); ++i) {
    f << data[i].identity_id << "," << data[i].image_id;
    for (double v : emb[i].values) f << "," << v;
    f << "\n";
  }
}

}  // namespace advcloak
