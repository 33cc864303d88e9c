#pragma once
// A small trained world for unit tests: 6 identities of 16 px faces and a
// two-epoch embedder. Built once per test binary.

#include "advcloak/dataset.hpp"
#include "advcloak/embedder.hpp"
#include "advcloak/training.hpp"

namespace tiny {

inline advcloak::SyntheticConfig data_config() {
  advcloak::SyntheticConfig c;
  c.num_identities = 6;
  c.images_per_identity = 6;
  c.image_size = 16;
  c.seed = 5;
  return c;
}

inline advcloak::EmbedderSpec embedder_spec() {
  advcloak::EmbedderSpec s;
  s.name = "tiny";
  s.input_size = 16;
  s.widths = {8, 16, 16};
  s.embedding_dim = 8;
  s.train.epochs = 2;
  s.train.batch_size = 12;
  s.train.seed = 3;
  return s;
}

struct World {
  std::vector<advcloak::LabeledImage> data;
  advcloak::Embedder embedder;
};

inline const World& world() {
  static const World w = [] {
    auto data = advcloak::generate_synthetic_identities(data_config());
    advcloak::Embedder e = advcloak::train_embedder(data, embedder_spec());
    return World{std::move(data), std::move(e)};
  }();
  return w;
}

inline advcloak::AttackConfig attack_config(bool disc = false) {
  advcloak::AttackConfig c = advcloak::AttackConfig::defaults(disc);
  c.epochs = 2;
  c.batch_size = 12;
  c.generator.widths = {8, 8};
  c.discriminator.widths = {8, 8};
  c.seed = 11;
  return c;
}

}  // namespace tiny
