#include "advcloak/adversary.hpp"

#include <algorithm>
#include <cmath>

#include "advcloak/batch.hpp"
#include "advcloak/checkpoint.hpp"
#include "advcloak/errors.hpp"

namespace advcloak {

namespace {

std::vector<LayerCount> counts_of(const nn::Sequential& s) {
  std::vector<LayerCount> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.push_back({s.layer(i).kind(), s.layer(i).parameter_count()});
  }
  return out;
}

void append_state(const nn::Sequential& s, std::vector<const Tensor*>& out) {
  for (const nn::Param* p : s.params()) out.push_back(&p->value);
  for (const Tensor* t : s.buffers()) out.push_back(t);
}

std::vector<Tensor*> unconst(const std::vector<const Tensor*>& v) {
  std::vector<Tensor*> out;
  for (const Tensor* t : v) out.push_back(const_cast<Tensor*>(t));
  return out;
}

}  // namespace

// ------------------------------------------------------------------ specs

void GeneratorSpec::validate() const {
  if (feature_channels < 1 || feature_size < 1 || out_channels < 1 || out_size < 1) {
    throw InvalidArgument("generator spec: sizes must be positive");
  }
  if (widths.empty()) throw InvalidArgument("generator spec: at least one upsample block");
  if (feature_size * (1 << widths.size()) != out_size) {
    throw InvalidArgument("generator spec: " + std::to_string(widths.size()) +
                          " x2 upsamples do not map " + std::to_string(feature_size) + " to " +
                          std::to_string(out_size));
  }
  if (output_init_scale < 0.0) throw InvalidArgument("generator spec: negative init scale");
}

nlohmann::json GeneratorSpec::to_json() const {
  return {{"feature_channels", feature_channels}, {"feature_size", feature_size},
          {"out_channels", out_channels},         {"out_size", out_size},
          {"widths", widths},                     {"batch_norm", batch_norm},
          {"output_init_scale", output_init_scale}};
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  s.feature_channels = j.at("feature_channels").get<int>();
  s.feature_size = j.at("feature_size").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
  s.out_size = j.at("out_size").get<int>();
  s.widths = j.at("widths").get<std::vector<int>>();
  s.batch_norm = j.at("batch_norm").get<bool>();
  s.output_init_scale = j.at("output_init_scale").get<double>();
  return s;
}

void DiscriminatorSpec::validate() const {
  if (widths.empty()) throw InvalidArgument("discriminator spec: no conv blocks");
  if (in_size % (1 << widths.size()) != 0) {
    throw InvalidArgument("discriminator spec: input size not divisible by the strides");
  }
  if (in_channels < 1) throw InvalidArgument("discriminator spec: channels must be positive");
}

nlohmann::json DiscriminatorSpec::to_json() const {
  return {{"in_channels", in_channels}, {"in_size", in_size}, {"widths", widths},
          {"leaky_slope", leaky_slope}};
}

DiscriminatorSpec DiscriminatorSpec::from_json(const nlohmann::json& j) {
  DiscriminatorSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.in_size = j.at("in_size").get<int>();
  s.widths = j.at("widths").get<std::vector<int>>();
  s.leaky_slope = j.at("leaky_slope").get<double>();
  return s;
}

void StudentSpec::validate() const {
  if (widths.size() < 2) throw InvalidArgument("student spec: depth must be at least 2");
  if (size % (1 << (widths.size() - 1)) != 0) {
    throw InvalidArgument("student spec: size not divisible by the pooling levels");
  }
  for (int w : widths) {
    if (w < 1) throw InvalidArgument("student spec: widths must be positive");
  }
}

nlohmann::json StudentSpec::to_json() const {
  return {{"channels", channels}, {"size", size}, {"widths", widths}};
}

StudentSpec StudentSpec::from_json(const nlohmann::json& j) {
  StudentSpec s;
  s.channels = j.at("channels").get<int>();
  s.size = j.at("size").get<int>();
  s.widths = j.at("widths").get<std::vector<int>>();
  return s;
}

// -------------------------------------------------------------- Generator

Generator::Generator(GeneratorSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  nn::Rng rng(seed_);
  int in = spec_.feature_channels;
  for (int w : spec_.widths) {
    net_.add<nn::Upsample2>();
    net_.add<nn::Conv2d>(in, w, 3, 1, 1, rng);
    if (spec_.batch_norm) net_.add<nn::BatchNorm2d>(w);
    net_.add<nn::ReLU>();
    in = w;
  }
  auto& out = net_.add<nn::Conv2d>(in, spec_.out_channels, 3, 1, 1, rng);
  out.scale_weights(static_cast<float>(spec_.output_init_scale));
  net_.add<nn::Tanh>();
}

void Generator::check_features(const Shape& s) const {
  if (s.c != spec_.feature_channels || s.h != spec_.feature_size || s.w != spec_.feature_size) {
    throw InvalidArgument("generator expects features " + std::to_string(spec_.feature_channels) +
                          "x" + std::to_string(spec_.feature_size) + "x" +
                          std::to_string(spec_.feature_size) + ", got " + s.str());
  }
}

Tensor Generator::forward(const Tensor& features, nn::Mode mode) {
  check_features(features.shape());
  return net_.forward(features, mode);
}

Tensor Generator::infer(const Tensor& features) const {
  check_features(features.shape());
  return net_.infer(features);
}

Tensor Generator::backward(const Tensor& grad) { return net_.backward(grad); }

std::vector<LayerCount> Generator::layer_counts() const { return counts_of(net_); }

std::vector<std::string> Generator::layer_kinds() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < net_.size(); ++i) out.push_back(net_.layer(i).kind());
  return out;
}

std::vector<const Tensor*> Generator::state_tensors() const {
  std::vector<const Tensor*> out;
  append_state(net_, out);
  return out;
}

std::vector<Tensor*> Generator::state_tensors() {
  return unconst(static_cast<const Generator&>(*this).state_tensors());
}

std::string Generator::weights_hash() const { return advcloak::weights_hash(state_tensors()); }

nlohmann::json Generator::manifest() const {
  return {{"kind", "generator"}, {"spec", spec_.to_json()}, {"seed", seed_},
          {"parameter_count", parameter_count()}, {"layers", net_.describe()}};
}

Perturbation generate_perturbation(const Generator& generator, const Tensor& features) {
  if (features.n() != 1) throw InvalidArgument("generate_perturbation: expects a single feature map");
  return perturbation_from_tensor(generator.infer(features), 0);
}

// ---------------------------------------------------------- Discriminator

Discriminator::Discriminator(DiscriminatorSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  nn::Rng rng(seed_);
  int in = spec_.in_channels;
  int size = spec_.in_size;
  for (int w : spec_.widths) {
    net_.add<nn::Conv2d>(in, w, 3, 2, 1, rng);
    net_.add<nn::ReLU>(static_cast<float>(spec_.leaky_slope));
    in = w;
    size /= 2;
  }
  net_.add<nn::Dense>(in * size * size, 1, rng);
}

Tensor Discriminator::forward(const Tensor& images, nn::Mode mode) { return net_.forward(images, mode); }
Tensor Discriminator::infer(const Tensor& images) const { return net_.infer(images); }
Tensor Discriminator::backward(const Tensor& grad_logits) { return net_.backward(grad_logits); }

double sigmoid_probability(double logit) {
  const double z = std::clamp(logit, -30.0, 30.0);
  return 1.0 / (1.0 + std::exp(-z));
}

double Discriminator::probability(const Image& image) const {
  return probabilities(to_tensor(image)).front();
}

std::vector<double> Discriminator::probabilities(const Tensor& images) const {
  const Tensor logits = infer(images);
  std::vector<double> out;
  for (std::size_t i = 0; i < logits.size(); ++i) out.push_back(sigmoid_probability(logits.data()[i]));
  return out;
}

std::vector<LayerCount> Discriminator::layer_counts() const { return counts_of(net_); }

std::vector<const Tensor*> Discriminator::state_tensors() const {
  std::vector<const Tensor*> out;
  append_state(net_, out);
  return out;
}

std::vector<Tensor*> Discriminator::state_tensors() {
  return unconst(static_cast<const Discriminator&>(*this).state_tensors());
}

std::string Discriminator::weights_hash() const { return advcloak::weights_hash(state_tensors()); }

nlohmann::json Discriminator::manifest() const {
  return {{"kind", "discriminator"}, {"spec", spec_.to_json()}, {"seed", seed_},
          {"parameter_count", parameter_count()}, {"layers", net_.describe()}};
}

// ---------------------------------------------------------------- Student

Student::Student(StudentSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  nn::Rng rng(seed_);
  const int levels = static_cast<int>(spec_.widths.size());
  int in = spec_.channels;
  for (int l = 0; l < levels; ++l) {
    nn::Sequential enc;
    enc.add<nn::Conv2d>(in, spec_.widths[l], 3, 1, 1, rng);
    enc.add<nn::BatchNorm2d>(spec_.widths[l]);
    enc.add<nn::ReLU>();
    encoders_.push_back(std::move(enc));
    in = spec_.widths[l];
  }
  pools_.resize(levels - 1);
  ups_.resize(levels - 1);
  decoders_.resize(levels - 1);
  skip_channels_.resize(levels - 1);
  up_channels_.resize(levels - 1);
  int deeper = spec_.widths[levels - 1];
  for (int l = levels - 2; l >= 0; --l) {
    up_channels_[l] = deeper;
    skip_channels_[l] = spec_.widths[l];
    decoders_[l].add<nn::Conv2d>(deeper + spec_.widths[l], spec_.widths[l], 3, 1, 1, rng);
    decoders_[l].add<nn::BatchNorm2d>(spec_.widths[l]);
    decoders_[l].add<nn::ReLU>();
    deeper = spec_.widths[l];
  }
  output_.add<nn::Conv2d>(spec_.widths[0], spec_.channels, 3, 1, 1, rng);
  output_.add<nn::Tanh>();
}

Tensor Student::forward(const Tensor& images, nn::Mode mode) {
  if (images.c() != spec_.channels || images.h() != spec_.size || images.w() != spec_.size) {
    throw InvalidArgument("student input shape mismatch " + images.shape().str());
  }
  const int levels = static_cast<int>(encoders_.size());
  std::vector<Tensor> enc(levels);
  Tensor h = images;
  for (int l = 0; l < levels; ++l) {
    if (l > 0) h = pools_[l - 1].forward(h, mode);
    enc[l] = encoders_[l].forward(h, mode);
    h = enc[l];
  }
  for (int l = levels - 2; l >= 0; --l) {
    h = decoders_[l].forward(concat_channels(ups_[l].forward(h, mode), enc[l]), mode);
  }
  return output_.forward(h, mode);
}

Tensor Student::infer(const Tensor& images) const {
  if (images.c() != spec_.channels || images.h() != spec_.size || images.w() != spec_.size) {
    throw InvalidArgument("student input shape mismatch " + images.shape().str());
  }
  const int levels = static_cast<int>(encoders_.size());
  std::vector<Tensor> enc(levels);
  Tensor h = images;
  for (int l = 0; l < levels; ++l) {
    if (l > 0) h = pools_[l - 1].infer(h);
    enc[l] = encoders_[l].infer(h);
    h = enc[l];
  }
  for (int l = levels - 2; l >= 0; --l) {
    h = decoders_[l].infer(concat_channels(ups_[l].infer(h), enc[l]));
  }
  return output_.infer(h);
}

void Student::backward(const Tensor& grad) {
  const int levels = static_cast<int>(encoders_.size());
  std::vector<Tensor> skip_grad(levels);
  Tensor g = output_.backward(grad);
  for (int l = 0; l <= levels - 2; ++l) {
    const Tensor g_cat = decoders_[l].backward(g);
    Tensor g_up, g_skip;
    split_channels(g_cat, up_channels_[l], g_up, g_skip);
    skip_grad[l] = std::move(g_skip);
    g = ups_[l].backward(g_up);
  }
  // g now flows into the deepest encoder output.
  for (int l = levels - 1; l >= 0; --l) {
    if (!skip_grad[l].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += skip_grad[l].data()[i];
    }
    g = encoders_[l].backward(g);
    if (l > 0) g = pools_[l - 1].backward(g);
  }
}

Perturbation Student::perturb(const Image& image) const {
  return perturbation_from_tensor(infer(to_tensor(image)), 0);
}

std::vector<nn::Param*> Student::params() {
  std::vector<nn::Param*> out;
  auto add = [&out](nn::Sequential& s) {
    auto p = s.params();
    out.insert(out.end(), p.begin(), p.end());
  };
  for (auto& e : encoders_) add(e);
  for (auto& d : decoders_) add(d);
  add(output_);
  return out;
}

std::int64_t Student::parameter_count() const {
  std::int64_t n = output_.parameter_count();
  for (const auto& e : encoders_) n += e.parameter_count();
  for (const auto& d : decoders_) n += d.parameter_count();
  return n;
}

std::vector<LayerCount> Student::layer_counts() const {
  std::vector<LayerCount> out;
  auto add = [&out](const nn::Sequential& s) {
    auto c = counts_of(s);
    out.insert(out.end(), c.begin(), c.end());
  };
  for (const auto& e : encoders_) add(e);
  for (const auto& d : decoders_) add(d);
  add(output_);
  return out;
}

std::vector<const Tensor*> Student::state_tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& e : encoders_) append_state(e, out);
  for (const auto& d : decoders_) append_state(d, out);
  append_state(output_, out);
  return out;
}

std::vector<Tensor*> Student::state_tensors() {
  return unconst(static_cast<const Student&>(*this).state_tensors());
}

std::string Student::weights_hash() const { return advcloak::weights_hash(state_tensors()); }

nlohmann::json Student::manifest() const {
  nlohmann::json enc = nlohmann::json::array(), dec = nlohmann::json::array();
  for (const auto& e : encoders_) enc.push_back(e.describe());
  for (const auto& d : decoders_) dec.push_back(d.describe());
  return {{"kind", "student_unet"}, {"spec", spec_.to_json()}, {"seed", seed_},
          {"parameter_count", parameter_count()},
          {"layers", {{"encoders", enc}, {"decoders", dec}, {"output", output_.describe()}}}};
}

// ------------------------------------------------------------ persistence

void save_model(const std::filesystem::path& dir, const std::string& stem,
                const std::vector<const Tensor*>& tensors, nlohmann::json manifest) {
  std::filesystem::create_directories(dir);
  const auto weights = dir / (stem + ".bin");
  write_weights(weights, tensors);
  manifest["weights_file"] = weights.filename().string();
  manifest["weights_sha256"] = sha256_file(weights);
  write_json(dir / (stem + ".json"), manifest);
}

void load_model(const std::filesystem::path& dir, const std::string& stem,
                const std::vector<Tensor*>& tensors) {
  read_weights(dir / (stem + ".bin"), tensors);
}

}  // namespace advcloak
