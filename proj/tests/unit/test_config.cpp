#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "advcloak/config.hpp"
#include "advcloak/errors.hpp"

using namespace advcloak;
using nlohmann::json;

TEST_CASE("defaults validate and round-trip") {
  const RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.seed == 7);
  CHECK(c.attack.pert.threshold == 0.1);
  CHECK(!c.attack.use_discriminator);
  CHECK(c.attack.epochs == 30);
  CHECK(c.ablation.alpha == 0.1);
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("seeds derive from the top-level seed") {
  const RunConfig c = RunConfig::from_json({{"seed", 100}});
  const DerivedSeeds s = c.seeds();
  CHECK(s.synthetic == 100);
  CHECK(s.tsne == 108);
  CHECK(c.dataset.synthetic.seed == s.synthetic);
  CHECK(c.embedder.train.seed == s.whitebox);
  CHECK(c.blackbox.train.seed == s.blackbox);
  CHECK(c.attack.seed == s.attack);
  CHECK(c.distill.seed == s.distill);
  CHECK_NOTHROW(RunConfig::from_json({{"seed", 100}, {"attack", {{"seed", 104}}}}));
  CHECK_THROWS_AS(RunConfig::from_json({{"seed", 100}, {"attack", {{"seed", 5}}}}), ConfigError);
}

TEST_CASE("partial user files overlay the defaults") {
  const RunConfig c = RunConfig::from_json({{"attack", {{"epochs", 3}, {"pert", {{"threshold", 0.05}}}}}});
  CHECK(c.attack.epochs == 3);
  CHECK(c.attack.pert.threshold == 0.05);
  CHECK(c.attack.batch_size == 32);
}

TEST_CASE("invalid documents raise ConfigError") {
  CHECK_THROWS_AS(RunConfig::from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"attack", {{"epochz", 3}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"attack", {{"epochs", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"attack", {{"adv", {{"kind", "l1"}}}}}}).validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"attack", {{"epochs", 0}}}}).validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"eval", {{"blur", {{"kernel", 4}}}}}}).validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"attack", {{"fine_tune", {{"enabled", true}, {"lr", 0.01}}}}}}).validate(),
                  ConfigError);

  const auto dir = std::filesystem::temp_directory_path() / "advcloak_cfg_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(dir / "absent.json"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped desk config loads") {
  const RunConfig c = RunConfig::load(ADVCLOAK_SOURCE_DIR "/configs/desk.json");
  CHECK_NOTHROW(c.validate());
  CHECK(c.attack.pert.threshold == 0.1);
  CHECK(c.attack.epochs == 30);
  CHECK(!c.attack.use_discriminator);
}

TEST_CASE("check_known_keys") {
  const json schema = {{"a", {{"b", 1}}}, {"free", nullptr}};
  CHECK_NOTHROW(check_known_keys({{"a", {{"b", 2}}}}, schema));
  CHECK_NOTHROW(check_known_keys({{"free", {{"anything", 1}}}}, schema));
  CHECK_THROWS_AS(check_known_keys({{"a", {{"c", 2}}}}, schema), ConfigError);
}
