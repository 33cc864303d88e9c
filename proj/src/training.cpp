#include "advcloak/training.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>

#include "advcloak/batch.hpp"
#include "advcloak/checkpoint.hpp"
#include "advcloak/errors.hpp"

namespace advcloak {

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json ssim_to_json(const SsimParams& p) {
  return {{"window_size", p.window_size}, {"window_sigma", p.window_sigma}, {"k1", p.k1},
          {"k2", p.k2}, {"dynamic_range", p.dynamic_range}};
}

SsimParams ssim_from_json(const nlohmann::json& j) {
  SsimParams p;
  p.window_size = j.at("window_size").get<int>();
  p.window_sigma = j.at("window_sigma").get<double>();
  p.k1 = j.at("k1").get<double>();
  p.k2 = j.at("k2").get<double>();
  p.dynamic_range = j.at("dynamic_range").get<double>();
  return p;
}

}  // namespace

// ------------------------------------------------------------------ config

void OptimizerConfig::validate() const {
  if (name != "adam") throw ConfigError("optimizer: only 'adam' is supported, got '" + name + "'");
  if (!(lr > 0.0)) throw ConfigError("optimizer: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"name", name}, {"lr", lr}, {"beta1", beta1}, {"beta2", beta2}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig o;
  o.name = j.at("name").get<std::string>();
  o.lr = j.at("lr").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  return o;
}

AttackConfig AttackConfig::defaults(bool use_discriminator) {
  AttackConfig c;
  c.use_discriminator = use_discriminator;
  if (use_discriminator) {
    c.optimizer.lr = 1e-4;
    c.optimizer.beta1 = 0.5;
    c.weights.alpha = 0.1;
  } else {
    c.optimizer.lr = 1e-3;
    c.optimizer.beta1 = 0.9;
  }
  return c;
}

void AttackConfig::validate() const {
  optimizer.validate();
  if (epochs < 1) throw ConfigError("attack: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("attack: batch_size must be >= 1");
  if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0) {
    throw ConfigError("attack: loss weights must be >= 0");
  }
  const double a = use_discriminator ? weights.alpha : 0.0;
  if (a == 0.0 && weights.beta == 0.0 && weights.gamma == 0.0) {
    throw ConfigError("attack: loss weights are all zero");
  }
  if (checkpoint_every < 0) throw ConfigError("attack: checkpoint_every must be >= 0");
  try {
    pert.validate();
    generator.validate();
    if (use_discriminator) discriminator.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  if (fine_tune.enabled) {
    if (fine_tune.unfrozen_top_layers < 0) throw ConfigError("fine_tune: unfrozen_top_layers must be >= 0");
    if (fine_tune.epochs < 1) throw ConfigError("fine_tune: epochs must be >= 1");
    if (!(fine_tune.lr > 0.0) || fine_tune.lr >= optimizer.lr) {
      throw ConfigError("fine_tune: lr must be positive and lower than the main lr");
    }
  }
}

nlohmann::json AttackConfig::to_json() const {
  nlohmann::json w = {{"beta", weights.beta}, {"gamma", weights.gamma}};
  w["alpha"] = use_discriminator ? nlohmann::json(weights.alpha) : nlohmann::json(nullptr);
  return {
      {"adv", {{"kind", to_string(adv.kind)}, {"targeted", adv.targeted}}},
      {"pert", {{"kind", to_string(pert.kind)}, {"threshold", pert.threshold}, {"ssim", ssim_to_json(pert.ssim)}}},
      {"weights", w},
      {"use_discriminator", use_discriminator},
      {"optimizer", optimizer.to_json()},
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"seed", seed},
      {"fine_tune",
       {{"enabled", fine_tune.enabled}, {"unfrozen_top_layers", fine_tune.unfrozen_top_layers},
        {"lr", fine_tune.lr}, {"epochs", fine_tune.epochs}}},
      {"generator", generator.to_json()},
      {"discriminator", discriminator.to_json()},
      {"project_in_training", project_in_training},
      {"checkpoint_every", checkpoint_every},
  };
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  AttackConfig c;
  c.adv.kind = adv_kind_from_string(j.at("adv").at("kind").get<std::string>());
  c.adv.targeted = j.at("adv").at("targeted").get<bool>();
  const auto& p = j.at("pert");
  c.pert.kind = pert_kind_from_string(p.at("kind").get<std::string>());
  c.pert.threshold = p.at("threshold").get<double>();
  c.pert.ssim = ssim_from_json(p.at("ssim"));
  const auto& w = j.at("weights");
  if (w.contains("alpha") && !w.at("alpha").is_null()) c.weights.alpha = w.at("alpha").get<double>();
  c.weights.beta = w.at("beta").get<double>();
  c.weights.gamma = w.at("gamma").get<double>();
  c.use_discriminator = j.at("use_discriminator").get<bool>();
  c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& f = j.at("fine_tune");
  c.fine_tune.enabled = f.at("enabled").get<bool>();
  c.fine_tune.unfrozen_top_layers = f.at("unfrozen_top_layers").get<int>();
  c.fine_tune.lr = f.at("lr").get<double>();
  c.fine_tune.epochs = f.at("epochs").get<int>();
  c.generator = GeneratorSpec::from_json(j.at("generator"));
  c.discriminator = DiscriminatorSpec::from_json(j.at("discriminator"));
  c.project_in_training = j.at("project_in_training").get<bool>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  return c;
}

// ------------------------------------------------------------------ report

double TrainReport::mean_epoch_seconds() const {
  if (epoch_seconds.empty()) return 0.0;
  return std::accumulate(epoch_seconds.begin(), epoch_seconds.end(), 0.0) /
         static_cast<double>(epoch_seconds.size());
}

nlohmann::json TrainReport::to_json() const {
  return {{"use_discriminator", use_discriminator},
          {"epoch_seconds", epoch_seconds},
          {"mean_epoch_seconds", mean_epoch_seconds()},
          {"generator_updates", generator_updates},
          {"discriminator_updates", discriminator_updates},
          {"steps", steps.size()},
          {"final_l_adv", steps.empty() ? 0.0 : steps.back().l_adv},
          {"final_l_pert", steps.empty() ? 0.0 : steps.back().l_pert},
          {"checkpoint", checkpoint}};
}

void TrainReport::write_loss_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << std::setprecision(10);
  f << "step,epoch," << (use_discriminator ? "l_gan," : "") << "l_adv,l_pert,total"
    << (use_discriminator ? ",l_disc" : "") << "\n";
  for (const auto& r : steps) {
    f << r.step << "," << r.epoch << ",";
    if (use_discriminator) f << r.l_gan.value_or(0.0) << ",";
    f << r.l_adv << "," << r.l_pert << "," << r.total;
    if (use_discriminator) f << "," << r.l_disc.value_or(0.0);
    f << "\n";
  }
}

// ------------------------------------------------------------ attack model

AttackModel::AttackModel(Embedder extractor, Generator generator)
    : extractor_(std::move(extractor)), generator_(std::move(generator)) {
  const Shape fs = extractor_.feature_shape();
  const auto& gs = generator_.spec();
  if (fs.c != gs.feature_channels || fs.h != gs.feature_size ||
      gs.out_channels != extractor_.spec().channels || gs.out_size != extractor_.spec().input_size) {
    throw InvalidArgument("attack model: generator spec does not match the extractor");
  }
}

Tensor AttackModel::perturb_batch(const Tensor& images) const {
  return generator_.infer(extractor_.features_infer(images));
}

Perturbation AttackModel::perturb(const Image& image) const {
  return perturbation_from_tensor(perturb_batch(to_tensor(image)), 0);
}

std::int64_t AttackModel::parameter_count() const {
  return extractor_.feature_parameter_count() + generator_.parameter_count();
}

std::string AttackModel::weights_hash() const {
  return sha256_hex(extractor_.weights_hash() + generator_.weights_hash());
}

nlohmann::json AttackModel::manifest() const {
  return {{"kind", "attack_model"},
          {"parameter_count", parameter_count()},
          {"feature_parameter_count", extractor_.feature_parameter_count()},
          {"generator_parameter_count", generator_.parameter_count()},
          {"extractor_hash", extractor_.weights_hash()},
          {"generator_hash", generator_.weights_hash()},
          {"weights_hash", weights_hash()},
          {"tuned_blocks", tuned_blocks_}};
}

void AttackModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  extractor_.save(dir / "extractor");
  save_model(dir, "generator", generator_.state_tensors(), generator_.manifest());
  write_json(dir / "attack.json", manifest());
}

AttackModel AttackModel::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "attack.json")) {
    throw MissingArtifact("no attack model in " + dir.string());
  }
  const auto m = read_json(dir / "attack.json");
  Embedder extractor = Embedder::load(dir / "extractor");
  const auto gm = read_json(dir / "generator.json");
  Generator gen(GeneratorSpec::from_json(gm.at("spec")), gm.at("seed").get<std::uint64_t>());
  load_model(dir, "generator", gen.state_tensors());
  AttackModel model(std::move(extractor), std::move(gen));
  model.set_tuned_blocks(m.at("tuned_blocks").get<std::vector<std::string>>());
  return model;
}

// ---------------------------------------------------------------- training

namespace {

Tensor stack_batches(const Tensor& a, const Tensor& b) {
  Shape s = a.shape();
  s.n += b.n();
  Tensor out(s);
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<long>(a.size()));
  return out;
}

class AttackTrainer {
 public:
  AttackTrainer(const Embedder& embedder, AttackModel& model, Discriminator* disc,
                const std::vector<LabeledImage>& train_set, const AttackConfig& cfg,
                std::vector<nn::Param*> gen_params, double lr, bool tune_extractor)
      : cfg_(cfg),
        loss_net_(embedder),
        model_(model),
        disc_(disc),
        gen_opt_(std::move(gen_params), {lr, cfg.optimizer.beta1, cfg.optimizer.beta2, 1e-7}),
        tune_(tune_extractor) {
    loss_net_.set_frozen(true);
    images_.reserve(train_set.size());
    for (const auto& li : train_set) images_.push_back(li.image);
    if (!cfg.adv.targeted) clean_ = loss_net_.embed_batch(images_);
    if (disc_) {
      disc_opt_.emplace(disc_->params(),
                        nn::AdamSettings{lr, cfg.optimizer.beta1, cfg.optimizer.beta2, 1e-7});
    }
  }

  void run(int epochs, std::uint64_t shuffle_salt, TrainReport& report,
           const std::function<void(int)>& after_epoch) {
    std::vector<std::size_t> order(images_.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
      const auto t0 = Clock::now();
      std::iota(order.begin(), order.end(), std::size_t{0});
      deterministic_shuffle(order, cfg_.seed * 1000003ULL + shuffle_salt + static_cast<std::uint64_t>(epoch));
      for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
        std::vector<std::size_t> idx(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
        StepRecord rec = step(idx, report);
        rec.epoch = static_cast<int>(report.epoch_seconds.size());
        rec.step = static_cast<long>(report.steps.size());
        report.steps.push_back(rec);
      }
      report.epoch_seconds.push_back(seconds_since(t0));
      if (after_epoch) after_epoch(epoch);
    }
  }

 private:
  StepRecord step(const std::vector<std::size_t>& idx, TrainReport& report) {
    const int B = static_cast<int>(idx.size());
    const double inv_b = 1.0 / B;
    const double t = cfg_.pert.threshold;
    std::vector<Image> xb;
    xb.reserve(idx.size());
    for (std::size_t i : idx) xb.push_back(images_[i]);
    const Tensor X = to_tensor(std::span<const Image>(xb));

    Embedder& extractor = model_.extractor();
    const Tensor feats = tune_ ? extractor.forward_features(X, nn::Mode::kEval) : extractor.features_infer(X);
    const Tensor D = model_.generator().forward(feats, nn::Mode::kTrain);

    Tensor P = D;
    if (cfg_.project_in_training) {
      for (float& v : P.values()) v = std::clamp(v, static_cast<float>(-t), static_cast<float>(t));
    }
    Tensor Xadv(X.shape());
    for (std::size_t k = 0; k < X.size(); ++k) {
      Xadv.values()[k] = std::clamp(X.values()[k] + P.values()[k], 0.0f, 1.0f);
    }

    StepRecord rec;
    Tensor g_xadv(X.shape());

    if (disc_) {
      // Discriminator step on [real; adversarial].
      const Tensor logits = disc_->forward(stack_batches(X, Xadv), nn::Mode::kTrain);
      Tensor g(logits.shape());
      double l_disc = 0.0;
      for (int i = 0; i < B; ++i) {
        const double pr = sigmoid_probability(logits.values()[i]);
        const double pa = sigmoid_probability(logits.values()[B + i]);
        l_disc += loss_disc(pr, pa) * inv_b;
        // d/dz via dL/dp * p (1 - p)
        const DiscGrad dg = loss_disc_grad(pr, pa);
        g.values()[i] = static_cast<float>(dg.d_real * pr * (1.0 - pr) * inv_b);
        g.values()[B + i] = static_cast<float>(dg.d_adv * pa * (1.0 - pa) * inv_b);
      }
      disc_->backward(g);
      disc_opt_->step();
      ++report.discriminator_updates;
      rec.l_disc = l_disc;

      // Generator realism term through the updated discriminator.
      const Tensor la = disc_->forward(Xadv, nn::Mode::kEval);
      Tensor gl(la.shape());
      double l_gan = 0.0;
      for (int i = 0; i < B; ++i) {
        const double pa = sigmoid_probability(la.values()[i]);
        l_gan += loss_gan(pa) * inv_b;
        gl.values()[i] = static_cast<float>(cfg_.weights.alpha * loss_gan_grad(pa) * pa * (1.0 - pa) * inv_b);
      }
      g_xadv = disc_->backward(gl);
      nn::zero_grad(disc_->params());
      rec.l_gan = l_gan;
    }

    // Adversarial term through the frozen copy of the attacked embedder.
    const Tensor E = loss_net_.forward_embedding(Xadv, nn::Mode::kEval);
    Tensor gE(E.shape());
    double l_adv = 0.0;
    for (int i = 0; i < B; ++i) {
      auto es = E.sample(i);
      Embedding e_adv{std::vector<double>(es.begin(), es.end())};
      const Embedding& e_ref = cfg_.adv.targeted ? *cfg_.adv.target : clean_[idx[i]];
      const LossGradient lg = loss_adv(e_adv, e_ref, cfg_.adv);
      l_adv += lg.value * inv_b;
      auto gs = gE.sample(i);
      for (std::size_t k = 0; k < gs.size(); ++k) gs[k] = static_cast<float>(cfg_.weights.beta * lg.grad[k] * inv_b);
    }
    const Tensor g_emb = loss_net_.backward_embedding(gE);
    for (std::size_t k = 0; k < g_xadv.size(); ++k) g_xadv.values()[k] += g_emb.values()[k];

    // Through the clip into [0,1].
    Tensor gP(X.shape());
    for (std::size_t k = 0; k < X.size(); ++k) {
      const float raw = X.values()[k] + P.values()[k];
      gP.values()[k] = (raw > 0.0f && raw < 1.0f) ? g_xadv.values()[k] : 0.0f;
    }

    // Perturbation term.
    double l_pert = 0.0;
    Tensor gD(D.shape());
    const bool on_raw = cfg_.pert.kind == PertKind::kThreshold;
    for (int i = 0; i < B; ++i) {
      const Perturbation delta = perturbation_from_tensor(on_raw ? D : P, i);
      const LossGradient pg = loss_pert(xb[static_cast<std::size_t>(i)], delta, cfg_.pert);
      l_pert += pg.value * inv_b;
      std::vector<double> scaled(pg.grad.size());
      for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] = cfg_.weights.gamma * pg.grad[k] * inv_b;
      add_raster_gradient(on_raw ? gD : gP, i, scaled);
    }

    // Through the projection.
    for (std::size_t k = 0; k < D.size(); ++k) {
      const float d = D.values()[k];
      const bool pass = !cfg_.project_in_training || (d >= -t && d <= t);
      if (pass) gD.values()[k] += gP.values()[k];
    }

    const Tensor g_feat = model_.generator().backward(gD);
    if (tune_) extractor.backward_features(g_feat);
    gen_opt_.step();
    ++report.generator_updates;

    rec.l_adv = l_adv;
    rec.l_pert = l_pert;
    rec.total = combined_generator_loss(cfg_.weights, rec.l_gan, l_adv, l_pert);
    return rec;
  }

  const AttackConfig& cfg_;
  Embedder loss_net_;
  AttackModel& model_;
  Discriminator* disc_;
  nn::Adam gen_opt_;
  std::optional<nn::Adam> disc_opt_;
  bool tune_;
  std::vector<Image> images_;
  std::vector<Embedding> clean_;
};

// Generator and discriminator input/output shapes follow the embedder.
AttackConfig fitted_to(const Embedder& embedder, AttackConfig cfg) {
  const Shape fs = embedder.feature_shape();
  cfg.generator.feature_channels = fs.c;
  cfg.generator.feature_size = fs.h;
  cfg.generator.out_channels = embedder.spec().channels;
  cfg.generator.out_size = embedder.spec().input_size;
  cfg.discriminator.in_channels = embedder.spec().channels;
  cfg.discriminator.in_size = embedder.spec().input_size;
  return cfg;
}

void check_train_inputs(const Embedder& embedder, const std::vector<LabeledImage>& train_set,
                        const AttackConfig& cfg) {
  fitted_to(embedder, cfg).validate();
  cfg.adv.validate();
  if (train_set.empty()) throw InvalidArgument("train_attack: empty training set");
  for (const auto& li : train_set) {
    if (li.image.height != embedder.spec().input_size || li.image.width != embedder.spec().input_size ||
        li.image.channels != embedder.spec().channels) {
      throw InvalidArgument("train_attack: image shape does not match the embedder input");
    }
  }
  if (cfg.adv.targeted && static_cast<int>(cfg.adv.target->dim()) != embedder.spec().embedding_dim) {
    throw InvalidArgument("train_attack: target embedding dimension mismatch");
  }
}

}  // namespace

AttackResult train_attack(const Embedder& embedder, const std::vector<LabeledImage>& train_set,
                          const AttackConfig& cfg, const std::filesystem::path& checkpoint_dir) {
  check_train_inputs(embedder, train_set, cfg);

  Embedder extractor = embedder;
  extractor.set_frozen(true);
  const AttackConfig fit = fitted_to(embedder, cfg);
  AttackResult result{AttackModel(std::move(extractor), Generator(fit.generator, cfg.seed)), std::nullopt, {}};
  if (cfg.use_discriminator) result.discriminator.emplace(fit.discriminator, cfg.seed + 1);
  result.report.use_discriminator = cfg.use_discriminator;

  Discriminator* disc = result.discriminator ? &*result.discriminator : nullptr;
  AttackTrainer trainer(embedder, result.model, disc, train_set, cfg, result.model.generator().params(),
                        cfg.optimizer.lr, false);
  std::function<void(int)> after;
  if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0) {
    after = [&](int epoch) {
      if ((epoch + 1) % cfg.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03d", epoch + 1);
        result.model.save(checkpoint_dir / "checkpoints" / name);
      }
    };
  }
  trainer.run(cfg.epochs, 0, result.report, after);

  if (cfg.fine_tune.enabled && cfg.fine_tune.unfrozen_top_layers > 0) {
    const TrainReport ft = fine_tune(embedder, result.model, train_set, cfg, disc);
    auto& r = result.report;
    r.epoch_seconds.insert(r.epoch_seconds.end(), ft.epoch_seconds.begin(), ft.epoch_seconds.end());
    for (StepRecord s : ft.steps) {
      s.step += static_cast<long>(r.steps.size());
      s.epoch += cfg.epochs;
      r.steps.push_back(s);
    }
    r.generator_updates += ft.generator_updates;
    r.discriminator_updates += ft.discriminator_updates;
  }
  result.report.checkpoint = result.model.weights_hash();
  return result;
}

std::vector<std::string> fine_tune_block_names(const AttackModel& model, int n) {
  const int available = model.extractor().spec().resolved_tap() + 1;
  if (n < 0 || n > available) {
    throw InvalidArgument("fine_tune: " + std::to_string(n) + " layers requested but only " +
                          std::to_string(available) + " feed the generator");
  }
  std::vector<std::string> names;
  for (int b = available - 1; b >= available - n; --b) names.push_back("block" + std::to_string(b));
  return names;
}

TrainReport fine_tune(const Embedder& embedder, AttackModel& model,
                      const std::vector<LabeledImage>& train_set, const AttackConfig& cfg,
                      Discriminator* discriminator) {
  TrainReport report;
  report.use_discriminator = discriminator != nullptr;
  const int n = cfg.fine_tune.unfrozen_top_layers;
  const auto names = fine_tune_block_names(model, n);
  if (!cfg.fine_tune.enabled || n == 0) return report;
  check_train_inputs(embedder, train_set, cfg);

  Embedder& extractor = model.extractor();
  const int available = extractor.spec().resolved_tap() + 1;
  std::vector<nn::Param*> params = model.generator().params();
  for (int b = available - n; b < available; ++b) {
    extractor.set_block_frozen(b, false);
    auto bp = extractor.block_params(b);
    params.insert(params.end(), bp.begin(), bp.end());
  }
  {
    AttackTrainer trainer(embedder, model, discriminator, train_set, cfg, std::move(params),
                          cfg.fine_tune.lr, true);
    trainer.run(cfg.fine_tune.epochs, 7777, report, {});
  }
  extractor.set_frozen(true);
  model.set_tuned_blocks(names);
  report.checkpoint = model.weights_hash();
  return report;
}

// ----------------------------------------------------------------- cloaking

Perturbation Cloaker::raw(const Image& image) const {
  return perturbation_from_tensor(raw_batch(to_tensor(image)), 0);
}

CloakOutput cloak(const Cloaker& cloaker, const Image& image, double threshold) {
  if (!(threshold >= 0.0)) throw InvalidArgument("cloak: threshold must be >= 0");
  validate_image(image);
  const auto t0 = Clock::now();
  const Tensor raw = cloaker.raw_batch(to_tensor(image));
  if (raw.c() != image.channels || raw.h() != image.height || raw.w() != image.width) {
    throw InvalidArgument("cloak: perturbation shape does not match the image");
  }
  CloakOutput out;
  out.delta = project_linf(perturbation_from_tensor(raw, 0), threshold);
  out.image = apply_perturbation(image, out.delta);
  out.seconds = seconds_since(t0);
  return out;
}

std::vector<CloakOutput> cloak_all(const Cloaker& cloaker, const std::vector<Image>& images,
                                   double threshold) {
  if (!(threshold >= 0.0)) throw InvalidArgument("cloak: threshold must be >= 0");
  std::vector<CloakOutput> out;
  out.reserve(images.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t end = std::min(images.size(), start + kChunk);
    for (std::size_t i = start; i < end; ++i) validate_image(images[i]);
    const auto t0 = Clock::now();
    const Tensor raw = cloaker.raw_batch(to_tensor(std::span<const Image>(images.data() + start, end - start)));
    const double per_image = seconds_since(t0) / static_cast<double>(end - start);
    for (std::size_t i = start; i < end; ++i) {
      CloakOutput o;
      o.delta = project_linf(perturbation_from_tensor(raw, static_cast<int>(i - start)), threshold);
      o.image = apply_perturbation(images[i], o.delta);
      o.seconds = per_image;
      out.push_back(std::move(o));
    }
  }
  return out;
}

}  // namespace advcloak
