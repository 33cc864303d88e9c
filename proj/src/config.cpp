#include "advcloak/config.hpp"

#include <cstdlib>
#include <fstream>
#include <utility>
#include <vector>

#include "advcloak/errors.hpp"

namespace advcloak {

RunConfig::RunConfig() {
  blackbox.name = "blackbox";
  blackbox.widths = {24, 48, 96};
  attack = AttackConfig::defaults(false);
  apply_seeds();
}

DerivedSeeds RunConfig::seeds() const {
  return {seed, seed + 1, seed + 2, seed + 3, seed + 4, seed + 5, seed + 6, seed + 7, seed + 8};
}

void RunConfig::apply_seeds() {
  const DerivedSeeds s = seeds();
  dataset.synthetic.seed = s.synthetic;
  embedder.train.seed = s.whitebox;
  blackbox.train.seed = s.blackbox;
  attack.seed = s.attack;
  distill.seed = s.distill;
  eval.tsne.seed = s.tsne;
}

void RunConfig::validate() const {
  try {
    dataset.synthetic.validate();
    embedder.validate();
    blackbox.validate();
    eval.tsne.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const auto& f = dataset.fractions;
  if (f.train <= 0 || f.val <= 0 || f.test <= 0) throw ConfigError("dataset: every split fraction must be > 0");
  if (dataset.target_images < 1) throw ConfigError("dataset: target_images must be >= 1");
  if (dataset.target_images >= dataset.synthetic.images_per_identity) {
    throw ConfigError("dataset: target_images must leave images of the target identity unused");
  }
  if (dataset.target_identity >= dataset.synthetic.num_identities || dataset.target_identity < -1) {
    throw ConfigError("dataset: target_identity out of range");
  }
  if (embedder.input_size != dataset.synthetic.image_size || blackbox.input_size != dataset.synthetic.image_size ||
      embedder.channels != dataset.synthetic.channels || blackbox.channels != dataset.synthetic.channels) {
    throw ConfigError("embedder input shape must match the dataset images");
  }
  if (attack.adv.targeted) throw ConfigError("attack: the main run is untargeted; use attack.targeted_run");
  attack.validate();
  if (ablation.enabled) {
    ablation.optimizer.validate();
    if (!(ablation.alpha > 0.0)) throw ConfigError("attack.ablation: alpha must be > 0");
  }
  distill.validate();
  if (eval.thresholds.empty()) throw ConfigError("eval: thresholds must be non-empty");
  for (double t : eval.thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval: thresholds must lie in (0, 1]");
  }
  if (!(eval.blur.sigma > 0.0) || eval.blur.kernel < 1 || eval.blur.kernel % 2 == 0) {
    throw ConfigError("eval: blur needs sigma > 0 and an odd kernel");
  }
  if (paths.out_dir.empty()) throw ConfigError("paths: out_dir must be set");
}

std::filesystem::path RunConfig::out_dir() const { return paths.out_dir; }

std::filesystem::path RunConfig::data_dir() const {
  if (!paths.data_root.empty()) return paths.data_root;
  if (const char* env = std::getenv("ADVCLOAK_DATA_ROOT"); env && *env) return env;
  return out_dir() / "data";
}

namespace {

nlohmann::json embedder_json(const EmbedderSpec& s) {
  auto j = s.to_json();
  j["train"].erase("seed");
  return j;
}

std::string split_mode_name(SplitMode m) { return m == SplitMode::kByIdentity ? "by_identity" : "by_image"; }

SplitMode split_mode_from(const std::string& s) {
  if (s == "by_identity") return SplitMode::kByIdentity;
  if (s == "by_image") return SplitMode::kByImage;
  throw ConfigError("dataset: unknown split mode '" + s + "'");
}

nlohmann::json section_json(const RunConfig& c, bool with_seeds) {
  auto synth = synthetic_config_to_json(c.dataset.synthetic);
  auto attack = c.attack.to_json();
  auto distill = c.distill.to_json();
  auto blackbox = embedder_json(c.blackbox);
  auto embedder = embedder_json(c.embedder);
  if (!with_seeds) {
    synth.erase("seed");
    attack.erase("seed");
    distill.erase("seed");
  }
  attack["ablation"] = {{"enabled", c.ablation.enabled},
                       {"optimizer", c.ablation.optimizer.to_json()},
                       {"alpha", c.ablation.alpha}};
  attack["targeted_run"] = {{"enabled", c.targeted.enabled}, {"kind", to_string(c.targeted.kind)}};
  nlohmann::json tsne = {{"perplexity", c.eval.tsne.perplexity},
                         {"iterations", c.eval.tsne.iterations},
                         {"learning_rate", c.eval.tsne.learning_rate},
                         {"early_exaggeration", c.eval.tsne.early_exaggeration},
                         {"exaggeration_iterations", c.eval.tsne.exaggeration_iterations},
                         {"momentum_initial", c.eval.tsne.momentum_initial},
                         {"momentum_final", c.eval.tsne.momentum_final},
                         {"momentum_switch", c.eval.tsne.momentum_switch}};
  nlohmann::json j = {
      {"dataset",
       {{"synthetic", synth},
        {"split", {{"fractions", {c.dataset.fractions.train, c.dataset.fractions.val, c.dataset.fractions.test}},
                   {"mode", split_mode_name(c.dataset.mode)}}},
        {"target_identity", c.dataset.target_identity},
        {"target_images", c.dataset.target_images}}},
      {"embedder", embedder},
      {"blackbox", blackbox},
      {"attack", attack},
      {"distill", distill},
      {"eval",
       {{"metric", to_string(c.eval.metric)},
        {"blur", {{"sigma", c.eval.blur.sigma}, {"kernel", c.eval.blur.kernel}}},
        {"thresholds", c.eval.thresholds},
        {"tsne", tsne}}},
      {"paths", {{"data_root", c.paths.data_root}, {"out_dir", c.paths.out_dir}}},
      {"seed", c.seed},
  };
  return j;
}

// Objects merge key by key; anything else is replaced.
void overlay(nlohmann::json& base, const nlohmann::json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      overlay(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

}  // namespace

void check_known_keys(const nlohmann::json& user, const nlohmann::json& schema, const std::string& where) {
  if (!user.is_object()) return;
  if (!schema.is_object()) {
    if (schema.is_null()) return;
    throw ConfigError("'" + where + "' must not be an object");
  }
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    check_known_keys(it.value(), schema.at(it.key()), path);
  }
}

nlohmann::json RunConfig::to_json() const {
  auto j = section_json(*this, true);
  const DerivedSeeds s = seeds();
  j["derived_seeds"] = {{"synthetic", s.synthetic}, {"split", s.split},       {"whitebox", s.whitebox},
                        {"blackbox", s.blackbox},   {"attack", s.attack},     {"targeted", s.targeted},
                        {"distill", s.distill},     {"pairs", s.pairs},       {"tsne", s.tsne}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  const RunConfig defaults;
  nlohmann::json doc = section_json(defaults, false);
  nlohmann::json input = user;
  input.erase("derived_seeds");
  // Resolved documents carry the derived component seeds; they are accepted
  // only when they agree with the top-level seed.
  {
    RunConfig probe;
    if (input.contains("seed")) {
      try {
        probe.seed = input.at("seed").get<std::uint64_t>();
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
      }
    }
    const DerivedSeeds s = probe.seeds();
    const std::vector<std::pair<nlohmann::json::json_pointer, std::uint64_t>> derived{
        {nlohmann::json::json_pointer("/dataset/synthetic/seed"), s.synthetic},
        {nlohmann::json::json_pointer("/attack/seed"), s.attack},
        {nlohmann::json::json_pointer("/distill/seed"), s.distill}};
    for (const auto& [ptr, want] : derived) {
      if (!input.contains(ptr)) continue;
      if (!input.at(ptr).is_number_integer() || input.at(ptr).get<std::int64_t>() < 0 ||
          input.at(ptr).get<std::uint64_t>() != want) {
        throw ConfigError("'" + ptr.to_string() + "' is derived from the top-level seed; set 'seed' instead");
      }
      input.at(ptr.parent_pointer()).erase(ptr.back());
    }
  }
  check_known_keys(input, doc);
  overlay(doc, input);

  RunConfig c;
  try {
    c.seed = doc.at("seed").get<std::uint64_t>();
    const DerivedSeeds s = c.seeds();
    const auto& d = doc.at("dataset");
    auto synth = d.at("synthetic");
    synth["seed"] = s.synthetic;
    c.dataset.synthetic = synthetic_config_from_json(synth);
    const auto fr = d.at("split").at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw ConfigError("dataset.split.fractions must hold three values");
    c.dataset.fractions = {fr[0], fr[1], fr[2]};
    c.dataset.mode = split_mode_from(d.at("split").at("mode").get<std::string>());
    c.dataset.target_identity = d.at("target_identity").get<int>();
    c.dataset.target_images = d.at("target_images").get<int>();

    auto emb = doc.at("embedder");
    emb["train"]["seed"] = s.whitebox;
    c.embedder = EmbedderSpec::from_json(emb);
    auto bb = doc.at("blackbox");
    bb["train"]["seed"] = s.blackbox;
    c.blackbox = EmbedderSpec::from_json(bb);

    auto att = doc.at("attack");
    const auto abl = att.at("ablation");
    const auto tgt = att.at("targeted_run");
    att.erase("ablation");
    att.erase("targeted_run");
    att["seed"] = s.attack;
    c.attack = AttackConfig::from_json(att);
    c.ablation.enabled = abl.at("enabled").get<bool>();
    c.ablation.optimizer = OptimizerConfig::from_json(abl.at("optimizer"));
    c.ablation.alpha = abl.at("alpha").get<double>();
    c.targeted.enabled = tgt.at("enabled").get<bool>();
    c.targeted.kind = adv_kind_from_string(tgt.at("kind").get<std::string>());

    auto dis = doc.at("distill");
    dis["seed"] = s.distill;
    c.distill = DistillConfig::from_json(dis);

    const auto& e = doc.at("eval");
    c.eval.metric = distance_metric_from_string(e.at("metric").get<std::string>());
    c.eval.blur.sigma = e.at("blur").at("sigma").get<double>();
    c.eval.blur.kernel = e.at("blur").at("kernel").get<int>();
    c.eval.thresholds = e.at("thresholds").get<std::vector<double>>();
    const auto& t = e.at("tsne");
    c.eval.tsne.perplexity = t.at("perplexity").get<double>();
    c.eval.tsne.iterations = t.at("iterations").get<int>();
    c.eval.tsne.learning_rate = t.at("learning_rate").get<double>();
    c.eval.tsne.early_exaggeration = t.at("early_exaggeration").get<double>();
    c.eval.tsne.exaggeration_iterations = t.at("exaggeration_iterations").get<int>();
    c.eval.tsne.momentum_initial = t.at("momentum_initial").get<double>();
    c.eval.tsne.momentum_final = t.at("momentum_final").get<double>();
    c.eval.tsne.momentum_switch = t.at("momentum_switch").get<int>();
    c.eval.tsne.seed = s.tsne;

    c.paths.data_root = doc.at("paths").at("data_root").get<std::string>();
    c.paths.out_dir = doc.at("paths").at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const InvalidArgument& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("malformed config " + path.string() + ": " + ex.what());
  }
  return from_json(j);
}

}  // namespace advcloak
