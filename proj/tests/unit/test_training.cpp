#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "advcloak/distill.hpp"
#include "advcloak/errors.hpp"
#include "advcloak/training.hpp"
#include "tiny.hpp"

using namespace advcloak;

namespace {

const AttackResult& trained(bool disc) {
  static const AttackResult plain = train_attack(tiny::world().embedder, tiny::world().data, tiny::attack_config(false));
  static const AttackResult with = train_attack(tiny::world().embedder, tiny::world().data, tiny::attack_config(true));
  return disc ? with : plain;
}

std::vector<Image> images() {
  std::vector<Image> v;
  for (const auto& l : tiny::world().data) v.push_back(l.image);
  return v;
}

}  // namespace

TEST_CASE("optimizer regimes") {
  const AttackConfig a = AttackConfig::defaults(false), b = AttackConfig::defaults(true);
  CHECK(a.optimizer.lr == 1e-3);
  CHECK(a.optimizer.beta1 == 0.9);
  CHECK(b.optimizer.lr == 1e-4);
  CHECK(b.optimizer.beta1 == 0.5);
  CHECK(a.to_json().at("weights").at("alpha").is_null());
  CHECK(AttackConfig::from_json(b.to_json()).to_json() == b.to_json());
  AttackConfig c = a;
  c.fine_tune.enabled = true;
  c.fine_tune.lr = a.optimizer.lr;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training leaves the embedder alone and counts updates") {
  const auto& w = tiny::world();
  const std::string h = w.embedder.weights_hash();
  const AttackResult& r = trained(false);
  CHECK(w.embedder.weights_hash() == h);
  const long per_epoch = (static_cast<long>(w.data.size()) + 11) / 12;
  CHECK(r.report.generator_updates == 2 * per_epoch);
  CHECK(r.report.discriminator_updates == 0);
  CHECK(!r.discriminator);
  CHECK(r.report.epoch_seconds.size() == 2);
  CHECK(r.model.parameter_count() == w.embedder.feature_parameter_count() + r.model.generator().parameter_count());

  const AttackResult& d = trained(true);
  CHECK(d.discriminator);
  CHECK(d.report.discriminator_updates == d.report.generator_updates);
}

TEST_CASE("logged totals equal the weighted sum of their terms") {
  for (bool disc : {false, true}) {
    const AttackResult& r = trained(disc);
    const LossWeights wgt = tiny::attack_config(disc).weights;
    CHECK(!r.report.steps.empty());
    for (const StepRecord& s : r.report.steps) {
      CHECK(s.l_gan.has_value() == disc);
      CHECK(s.l_disc.has_value() == disc);
      CHECK(s.total == doctest::Approx(combined_generator_loss(wgt, s.l_gan, s.l_adv, s.l_pert)).epsilon(1e-9));
      CHECK(s.l_pert >= 0.0);
      CHECK(s.l_adv <= 0.0);
    }
    const auto path = std::filesystem::temp_directory_path() / "advcloak_losses.csv";
    r.report.write_loss_csv(path);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == (disc ? "step,epoch,l_gan,l_adv,l_pert,total,l_disc" : "step,epoch,l_adv,l_pert,total"));
    std::filesystem::remove(path);
  }
}

TEST_CASE("cloaking respects the threshold") {
  const AttackResult& r = trained(false);
  const TeacherCloaker tc(r.model);
  const auto imgs = images();
  for (double t : {0.001, 0.05, 0.1, 0.2}) {
    const auto outs = cloak_all(tc, imgs, t);
    REQUIRE(outs.size() == imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      CHECK(linf_norm(outs[i].delta) <= t + 1e-6);
      CHECK(outs[i].image == apply_perturbation(imgs[i], outs[i].delta));
      CHECK(linf_norm(signed_difference(outs[i].image, imgs[i])) <= t + 1e-6);
    }
    const CloakOutput one = cloak(tc, imgs[3], t);
    CHECK(one.image == outs[3].image);
  }
  for (const auto& o : cloak_all(ZeroCloaker(), imgs, 0.1)) CHECK(linf_norm(o.delta) == 0.0);
  CHECK_THROWS_AS(cloak(tc, Image(8, 8, 3, 0.5), 0.1), InvalidArgument);
}

TEST_CASE("fine-tuning unfreezes only the requested top blocks") {
  const auto& w = tiny::world();
  AttackModel m = trained(false).model;
  CHECK(fine_tune_block_names(m, 1) == std::vector<std::string>{"block2"});
  CHECK(fine_tune_block_names(m, 3).size() == 3);
  CHECK_THROWS_AS(fine_tune_block_names(m, 4), InvalidArgument);

  AttackConfig cfg = tiny::attack_config(false);
  cfg.fine_tune.enabled = true;
  cfg.fine_tune.unfrozen_top_layers = 1;
  cfg.fine_tune.epochs = 1;
  const Embedder before = m.extractor();
  const std::string eh = w.embedder.weights_hash();
  const TrainReport rep = fine_tune(w.embedder, m, w.data, cfg);
  CHECK(w.embedder.weights_hash() == eh);
  CHECK(m.tuned_blocks() == std::vector<std::string>{"block2"});
  CHECK(rep.epoch_seconds.size() == 1);
  // Lower blocks untouched, top block moved.
  Embedder after = m.extractor();
  Embedder copy = before;
  auto same = [](std::vector<nn::Param*> a, std::vector<nn::Param*> b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i]->value.values() != b[i]->value.values()) return false;
    }
    return true;
  };
  CHECK(same(after.block_params(0), copy.block_params(0)));
  CHECK(same(after.block_params(1), copy.block_params(1)));
  CHECK(!same(after.block_params(2), copy.block_params(2)));
}

TEST_CASE("attack model round-trips to disk") {
  const AttackResult& r = trained(false);
  const auto dir = std::filesystem::temp_directory_path() / "advcloak_attack_test";
  r.model.save(dir);
  const AttackModel l = AttackModel::load(dir);
  CHECK(l.weights_hash() == r.model.weights_hash());
  const Image x = tiny::world().data[0].image;
  CHECK(l.perturb(x) == r.model.perturb(x));
  std::filesystem::remove_all(dir);
}

TEST_CASE("distillation") {
  const auto& w = tiny::world();
  const AttackResult& r = trained(false);
  DistillConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 12;
  cfg.student.size = 16;
  cfg.student.widths = {8, 8};
  cfg.validation_images = 12;
  const std::string th = r.model.weights_hash();
  const long calls = r.model.extractor().forward_calls();
  const DistillResult d = distill(r.model, w.data, cfg, 0.1);
  CHECK(r.model.weights_hash() == th);
  CHECK(d.report.teacher_hash == th);
  CHECK(d.report.epoch_train_loss.size() == 3);
  CHECK(d.report.epoch_validation_loss.size() == 3);
  CHECK(d.report.student_parameters == d.student.parameter_count());
  CHECK(d.report.teacher_parameters == r.model.parameter_count());
  CHECK(d.report.parameter_ratio() < 1.0);
  CHECK(d.report.epoch_train_loss.back() < d.report.epoch_train_loss.front());

  const long teacher_calls = r.model.extractor().forward_calls();
  CHECK(teacher_calls > calls);
  const long embedder_calls = w.embedder.forward_calls();
  const auto outs = cloak_all(StudentCloaker(d.student), images(), 0.1);
  CHECK(r.model.extractor().forward_calls() == teacher_calls);
  CHECK(w.embedder.forward_calls() == embedder_calls);
  for (const auto& o : outs) CHECK(linf_norm(o.delta) <= 0.1 + 1e-6);

  Tensor a(1, 1, 1, 2), b(1, 1, 1, 2);
  a.values() = {1.0f, 0.0f};
  CHECK(perturbation_mse(a, b) == doctest::Approx(0.5));
}
