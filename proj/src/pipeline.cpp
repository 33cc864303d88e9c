#include "advcloak/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

#include "advcloak/checkpoint.hpp"
#include "advcloak/errors.hpp"
#include "advcloak/png_io.hpp"

namespace advcloak {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

RunLayout layout(const RunConfig& cfg) { return {cfg.out_dir()}; }

void write_run_files(const fs::path& dir, const RunConfig& cfg, const nlohmann::json& inputs) {
  fs::create_directories(dir);
  write_json(dir / "resolved_config.json", cfg.to_json());
  write_json(dir / "inputs.json", inputs);
}

void require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingArtifact(what + " not found at " + p.string() + "; run the upstream stage first");
}

int resolve_target_identity(const RunConfig& cfg) {
  return cfg.dataset.target_identity >= 0 ? cfg.dataset.target_identity
                                          : cfg.dataset.synthetic.num_identities - 1;
}

std::vector<Image> images_of(const std::vector<LabeledImage>& set) {
  std::vector<Image> out;
  out.reserve(set.size());
  for (const auto& li : set) out.push_back(li.image);
  return out;
}

std::vector<int> identities_of(const std::vector<LabeledImage>& set) {
  std::vector<int> out;
  out.reserve(set.size());
  for (const auto& li : set) out.push_back(li.identity_id);
  return out;
}

Embedder load_embedder(const fs::path& dir, const std::string& what) {
  require(dir / "manifest.json", what);
  return Embedder::load(dir);
}

VerificationThreshold load_threshold(const fs::path& dir) {
  require(dir / "threshold.json", "verification threshold");
  const auto j = read_json(dir / "threshold.json");
  return {j.at("tau").get<double>(), distance_metric_from_string(j.at("metric").get<std::string>()),
          j.at("eer").get<double>()};
}

AttackModel load_attack(const fs::path& dir, const std::string& what) {
  require(dir / "attack.json", what);
  return AttackModel::load(dir);
}

Student load_student(const fs::path& dir) {
  require(dir / "student.json", "student model");
  const auto m = read_json(dir / "student.json");
  Student s(StudentSpec::from_json(m.at("spec")), m.at("seed").get<std::uint64_t>());
  load_model(dir, "student", s.state_tensors());
  return s;
}

Embedding embedding_from_json(const nlohmann::json& j) {
  return Embedding{j.get<std::vector<double>>()};
}

double naive_fnmr(const EmbeddingModel& model, const std::vector<Image>& images, const std::vector<int>& ids,
                  const EvalProtocol& p) {
  long misses = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    misses += verify(model, images[i], p.references.at(ids[i]), p.th) ? 0 : 1;
  }
  return static_cast<double>(misses) / static_cast<double>(images.size());
}

}  // namespace

// ------------------------------------------------------------------ data

PreparedData load_prepared(const RunConfig& cfg) {
  const fs::path dir = cfg.data_dir();
  require(dir / "manifest.json", "dataset");
  const DatasetOnDisk ds = load_dataset(dir);
  PreparedData p;
  p.splits = ds.splits();
  p.targets = ds.by_split("target");
  p.target_identity = ds.target_identity;
  if (p.splits.train.empty() || p.splits.val.empty() || p.splits.test.empty()) {
    throw std::runtime_error("dataset in " + dir.string() + " has an empty split");
  }
  return p;
}

void stage_synth_data(const RunConfig& cfg) {
  const auto all = generate_synthetic_identities(cfg.dataset.synthetic);
  const int target = resolve_target_identity(cfg);
  const TargetReservation res = reserve_target_images(all, target, cfg.dataset.target_images);
  std::vector<LabeledImage> pool;
  for (const auto& li : res.remainder) {
    if (li.identity_id != target) pool.push_back(li);
  }
  const DatasetSplits sp = split_dataset(pool, cfg.dataset.fractions, cfg.seeds().split, cfg.dataset.mode);

  DatasetOnDisk ds;
  ds.config = cfg.dataset.synthetic;
  ds.fractions = cfg.dataset.fractions;
  ds.mode = cfg.dataset.mode;
  ds.split_seed = cfg.seeds().split;
  ds.target_identity = target;
  ds.images = all;
  for (const auto& li : all) ds.split_of[{li.identity_id, li.image_id}] = "unused";
  auto mark = [&](const std::vector<LabeledImage>& set, const char* name) {
    for (const auto& li : set) ds.split_of[{li.identity_id, li.image_id}] = name;
  };
  mark(sp.train, "train");
  mark(sp.val, "val");
  mark(sp.test, "test");
  mark(res.targets, "target");

  const fs::path dir = cfg.data_dir();
  save_dataset(dir, ds);
  write_run_files(dir / "run", cfg, nlohmann::json::object());
}

// ------------------------------------------------------------ embedders

void stage_train_embedder(const RunConfig& cfg, const std::string& which) {
  if (which != "whitebox" && which != "blackbox" && which != "both") {
    throw ConfigError("train-embedder: unknown model '" + which + "'");
  }
  const PreparedData data = load_prepared(cfg);
  const RunLayout L = layout(cfg);
  const nlohmann::json inputs = {{"dataset_manifest_sha256", sha256_file(cfg.data_dir() / "manifest.json")}};
  auto train_one = [&](const EmbedderSpec& spec, const fs::path& dir) {
    const auto t0 = Clock::now();
    const Embedder model = train_embedder(data.splits.train, spec);
    const double train_seconds = seconds_since(t0);
    const VerificationThreshold th = calibrate_threshold(model, data.splits.val, cfg.eval.metric, cfg.seeds().pairs);
    model.save(dir);
    write_json(dir / "threshold.json", {{"tau", th.tau}, {"metric", to_string(th.metric)}, {"eer", th.eer}});
    write_json(dir / "train_report.json",
               {{"train_seconds", train_seconds},
                {"val_eer", th.eer},
                {"val_accuracy", verification_accuracy(model, data.splits.val, th, cfg.seeds().pairs)},
                {"test_accuracy", verification_accuracy(model, data.splits.test, th, cfg.seeds().pairs)},
                {"parameter_count", model.parameter_count()},
                {"weights_hash", model.weights_hash()}});
    write_run_files(dir, cfg, inputs);
  };
  if (which != "blackbox") train_one(cfg.embedder, L.whitebox());
  if (which != "whitebox") train_one(cfg.blackbox, L.blackbox());
}

// --------------------------------------------------------------- attacks

void stage_train_attack(const RunConfig& cfg, const std::string& variant) {
  if (variant != "main" && variant != "ablation" && variant != "targeted" && variant != "all") {
    throw ConfigError("train-attack: unknown variant '" + variant + "'");
  }
  const RunLayout L = layout(cfg);
  const PreparedData data = load_prepared(cfg);
  const Embedder wb = load_embedder(L.whitebox(), "white-box embedder");
  const nlohmann::json inputs = {{"dataset_manifest_sha256", sha256_file(cfg.data_dir() / "manifest.json")},
                                 {"whitebox_hash", wb.weights_hash()}};

  auto run = [&](const AttackConfig& ac, const fs::path& dir) {
    fs::create_directories(dir);
    AttackResult r = train_attack(wb, data.splits.train, ac, dir);
    r.model.save(dir);
    if (r.discriminator) {
      save_model(dir, "discriminator", std::as_const(*r.discriminator).state_tensors(), r.discriminator->manifest());
    }
    write_json(dir / "train_report.json", r.report.to_json());
    r.report.write_loss_csv(dir / "loss.csv");
    auto acj = ac.to_json();
    if (ac.adv.target) acj["adv"]["target"] = ac.adv.target->values;
    write_json(dir / "attack_config.json", acj);
    write_run_files(dir, cfg, inputs);
  };

  if (variant == "main" || variant == "all") run(cfg.attack, L.attack());
  if (variant == "ablation" || (variant == "all" && cfg.ablation.enabled)) {
    AttackConfig ac = cfg.attack;
    ac.use_discriminator = true;
    ac.optimizer = cfg.ablation.optimizer;
    ac.weights.alpha = cfg.ablation.alpha;
    if (ac.fine_tune.enabled && ac.fine_tune.lr >= ac.optimizer.lr) ac.fine_tune.enabled = false;
    run(ac, L.ablation());
  }
  if (variant == "targeted" || (variant == "all" && cfg.targeted.enabled)) {
    if (data.targets.empty()) throw std::runtime_error("dataset holds no target images");
    AttackConfig ac = cfg.attack;
    ac.adv.targeted = true;
    ac.adv.kind = cfg.targeted.kind;
    ac.adv.target = identity_reference(wb, images_of(data.targets));
    ac.seed = cfg.seeds().targeted;
    run(ac, L.targeted());
  }
}

// -------------------------------------------------------------- distill

void stage_distill(const RunConfig& cfg) {
  const RunLayout L = layout(cfg);
  const PreparedData data = load_prepared(cfg);
  const AttackModel teacher = load_attack(L.attack(), "attack model");
  const Embedder wb = load_embedder(L.whitebox(), "white-box embedder");
  const VerificationThreshold th = load_threshold(L.whitebox());
  const double t = cfg.attack.pert.threshold;

  DistillResult r = distill(teacher, data.splits.train, cfg.distill, t);
  const fs::path dir = L.student();
  nlohmann::json manifest = r.student.manifest();
  manifest["teacher_hash"] = r.report.teacher_hash;
  manifest["distill_config"] = cfg.distill.to_json();
  save_model(dir, "student", std::as_const(r.student).state_tensors(), manifest);

  const EvalProtocol p = make_protocol(wb, data.splits.test, th);
  auto rep = r.report.to_json();
  rep["teacher_success_whitebox"] = attack_success_rate(wb, TeacherCloaker(teacher), data.splits.test, p, t);
  rep["student_success_whitebox"] = attack_success_rate(wb, StudentCloaker(r.student), data.splits.test, p, t);
  write_json(dir / "distill_report.json", rep);
  write_run_files(dir, cfg, {{"teacher_hash", r.report.teacher_hash}, {"whitebox_hash", wb.weights_hash()}});
}

// ------------------------------------------------------------- evaluate

nlohmann::json stage_evaluate(const RunConfig& cfg) {
  const RunLayout L = layout(cfg);
  const PreparedData data = load_prepared(cfg);
  const Embedder wb = load_embedder(L.whitebox(), "white-box embedder");
  const Embedder bb = load_embedder(L.blackbox(), "black-box embedder");
  const VerificationThreshold th_wb = load_threshold(L.whitebox());
  const VerificationThreshold th_bb = load_threshold(L.blackbox());
  const AttackModel teacher = load_attack(L.attack(), "attack model");
  std::optional<AttackModel> ablation, targeted;
  std::optional<Student> student;
  std::optional<Discriminator> disc;
  if (cfg.ablation.enabled) {
    ablation.emplace(load_attack(L.ablation(), "discriminator ablation model"));
    require(L.ablation() / "discriminator.json", "discriminator");
    const auto dm = read_json(L.ablation() / "discriminator.json");
    disc.emplace(DiscriminatorSpec::from_json(dm.at("spec")), dm.at("seed").get<std::uint64_t>());
    load_model(L.ablation(), "discriminator", disc->state_tensors());
  }
  if (cfg.targeted.enabled) targeted.emplace(load_attack(L.targeted(), "targeted attack model"));
  student.emplace(load_student(L.student()));

  const std::string wb_hash = wb.weights_hash(), bb_hash = bb.weights_hash();
  const auto& test = data.splits.test;
  const std::vector<Image> originals = images_of(test);
  const std::vector<int> ids = identities_of(test);
  const double t = cfg.attack.pert.threshold;
  const EvalProtocol p_wb = make_protocol(wb, test, th_wb);
  const EvalProtocol p_bb = make_protocol(bb, test, th_bb);

  nlohmann::json report;
  report["metadata"] = {
      {"test_images", test.size()},
      {"threshold", t},
      {"metric", to_string(cfg.eval.metric)},
      {"blur", {{"sigma", cfg.eval.blur.sigma}, {"kernel", cfg.eval.blur.kernel},
                {"order", "blur is the last transform before embedding"}}},
      {"references", "normalized mean embedding of each identity's clean test images"},
      {"targeted_success", "cloaked embedding strictly closer to the target reference than to its own reference"},
      {"whitebox_hash", wb_hash},
      {"blackbox_hash", bb_hash},
      {"teacher_hash", teacher.weights_hash()}};
  report["thresholds"] = {{"whitebox", {{"tau", th_wb.tau}, {"eer", th_wb.eer}}},
                          {"blackbox", {{"tau", th_bb.tau}, {"eer", th_bb.eer}}}};

  const std::vector<Image> blurred_clean = blur_all(originals, cfg.eval.blur);
  report["baseline"] = {
      {"clean_fnmr_whitebox", naive_fnmr(wb, originals, ids, p_wb)},
      {"clean_fnmr_blackbox", naive_fnmr(bb, originals, ids, p_bb)},
      {"blurred_clean_fnmr_whitebox", naive_fnmr(wb, blurred_clean, ids, p_wb)},
      {"zero_cloaker_success_whitebox", attack_success_rate(wb, ZeroCloaker(), test, p_wb, t)},
      {"zero_cloaker_success_blackbox", attack_success_rate(bb, ZeroCloaker(), test, p_bb, t)},
      {"zero_cloaker_blurred_success_whitebox",
       robustness_under_blur(wb, ZeroCloaker(), test, p_wb, t, cfg.eval.blur)}};

  auto evaluate_model = [&](const Cloaker& cloaker, const EvalProtocol& pw, const EvalProtocol& pb,
                            std::int64_t params) {
    const auto outs = cloak_all(cloaker, originals, t);
    std::vector<Image> cloaked;
    double linf_sum = 0.0, linf_max = 0.0, secs = 0.0;
    for (const auto& o : outs) {
      cloaked.push_back(o.image);
      const double l = linf_norm(o.delta);
      linf_sum += l;
      linf_max = std::max(linf_max, l);
      secs += o.seconds;
    }
    nlohmann::json m = {
        {"success_rate_whitebox", success_rate(wb, cloaked, ids, pw)},
        {"success_rate_blackbox", success_rate(bb, cloaked, ids, pb)},
        {"success_rate_whitebox_blurred", success_rate(wb, blur_all(cloaked, cfg.eval.blur), ids, pw)},
        {"ssim", ssim_report(originals, cloaked).to_json()},
        {"mean_linf", linf_sum / static_cast<double>(outs.size())},
        {"max_linf", linf_max},
        {"seconds_per_image", secs / static_cast<double>(outs.size())},
        {"embedding_shift", embedding_shift_stats(wb, originals, cloaked, pw).to_json()},
        {"parameter_count", params}};
    if (disc) {
      const Detectability d = detectability_probe(*disc, originals, cloaked);
      m["detectability"] = {{"mean_p_orig", d.mean_p_orig}, {"mean_p_adv", d.mean_p_adv}};
    }
    return std::make_pair(m, cloaked);
  };

  nlohmann::json models;
  models["teacher"] = evaluate_model(TeacherCloaker(teacher), p_wb, p_bb, teacher.parameter_count()).first;
  if (ablation) {
    models["teacher_disc"] = evaluate_model(TeacherCloaker(*ablation), p_wb, p_bb, ablation->parameter_count()).first;
  }
  models["student"] = evaluate_model(StudentCloaker(*student), p_wb, p_bb, student->parameter_count()).first;
  {
    // Embedder calls made by the student's cloaking pass alone.
    const long wb0 = wb.forward_calls(), bb0 = bb.forward_calls(), ex0 = teacher.extractor().forward_calls();
    cloak_all(StudentCloaker(*student), originals, t);
    models["student"]["embedder_calls_during_cloaking"] =
        (wb.forward_calls() - wb0) + (bb.forward_calls() - bb0) + (teacher.extractor().forward_calls() - ex0);
  }
  if (targeted) {
    require(L.targeted() / "attack_config.json", "targeted attack config");
    const auto ac = read_json(L.targeted() / "attack_config.json");
    const Embedding target = embedding_from_json(ac.at("adv").at("target"));
    const EvalProtocol pt_wb = make_protocol(wb, test, th_wb, target);
    const EvalProtocol pt_bb = make_protocol(bb, test, th_bb, identity_reference(bb, images_of(data.targets)));
    auto [m, cloaked] = evaluate_model(TeacherCloaker(*targeted), pt_wb, pt_bb, targeted->parameter_count());
    const auto ea = wb.embed_batch(cloaked);
    long within = 0;
    for (const auto& e : ea) within += distance(e, target, th_wb.metric) < th_wb.tau ? 1 : 0;
    m["success_rate_whitebox_tau"] = static_cast<double>(within) / static_cast<double>(ea.size());
    models["targeted"] = m;
  }
  report["models"] = models;

  nlohmann::json sweep = nlohmann::json::array();
  const TeacherCloaker tc(teacher);
  for (double tt : cfg.eval.thresholds) {
    const auto outs = cloak_all(tc, originals, tt);
    std::vector<Image> cloaked;
    double linf_max = 0.0;
    for (const auto& o : outs) {
      cloaked.push_back(o.image);
      linf_max = std::max(linf_max, linf_norm(o.delta));
    }
    sweep.push_back({{"threshold", tt},
                     {"success_rate_whitebox", success_rate(wb, cloaked, ids, p_wb)},
                     {"success_rate_blackbox", success_rate(bb, cloaked, ids, p_bb)},
                     {"mean_ssim", ssim_report(originals, cloaked).mean},
                     {"max_linf", linf_max}});
  }
  report["threshold_sweep"] = sweep;

  nlohmann::json training;
  const auto main_report = read_json(L.attack() / "train_report.json");
  training["mean_epoch_seconds_no_disc"] = main_report.at("mean_epoch_seconds");
  training["discriminator_updates_no_disc"] = main_report.at("discriminator_updates");
  if (ablation) {
    const auto ab = read_json(L.ablation() / "train_report.json");
    training["mean_epoch_seconds_disc"] = ab.at("mean_epoch_seconds");
    training["discriminator_updates_disc"] = ab.at("discriminator_updates");
  }
  report["training"] = training;
  report["distill"] = {{"teacher_parameters", teacher.parameter_count()},
                       {"student_parameters", student->parameter_count()},
                       {"parameter_ratio", static_cast<double>(student->parameter_count()) /
                                               static_cast<double>(teacher.parameter_count())}};

  if (wb.weights_hash() != wb_hash || bb.weights_hash() != bb_hash) {
    throw std::logic_error("evaluation modified an embedder");
  }
  const fs::path dir = L.eval();
  write_run_files(dir, cfg, {{"whitebox_hash", wb_hash}, {"blackbox_hash", bb_hash},
                             {"teacher_hash", teacher.weights_hash()},
                             {"student_hash", student->weights_hash()}});
  write_json(dir / "report.json", report);
  return report;
}

// ------------------------------------------------------------ visualize

nlohmann::json stage_visualize(const RunConfig& cfg) {
  const RunLayout L = layout(cfg);
  const PreparedData data = load_prepared(cfg);
  const Embedder wb = load_embedder(L.whitebox(), "white-box embedder");
  const AttackModel model = load_attack(L.targeted(), "targeted attack model");
  require(L.targeted() / "attack_config.json", "targeted attack config");
  const Embedding target = embedding_from_json(read_json(L.targeted() / "attack_config.json").at("adv").at("target"));
  const double t = cfg.attack.pert.threshold;
  const auto& test = data.splits.test;

  const auto originals = images_of(test);
  std::vector<Image> cloaked;
  for (auto& o : cloak_all(TeacherCloaker(model), originals, t)) cloaked.push_back(std::move(o.image));
  const auto eo = wb.embed_batch(originals);
  const auto ea = wb.embed_batch(cloaked);
  const auto et = wb.embed_batch(images_of(data.targets));

  std::vector<std::vector<double>> x;
  std::vector<TsneRow> rows;
  for (std::size_t i = 0; i < test.size(); ++i) {
    x.push_back(eo[i].values);
    rows.push_back({test[i].identity_id, test[i].image_id, "original"});
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    x.push_back(ea[i].values);
    rows.push_back({test[i].identity_id, test[i].image_id, "cloaked"});
  }
  for (std::size_t i = 0; i < data.targets.size(); ++i) {
    x.push_back(et[i].values);
    rows.push_back({data.targets[i].identity_id, data.targets[i].image_id, "target"});
  }
  // The reference itself is the target point.
  x.push_back(target.values);
  rows.push_back({data.target_identity, -1, "target"});

  TsneConfig tc = cfg.eval.tsne;
  tc.perplexity = feasible_perplexity(static_cast<int>(x.size()), tc.perplexity);
  const TsneResult r = tsne(x, tc);

  const Point2 tp = r.points.back();
  auto dist2d = [&](const Point2& a) { return std::hypot(a[0] - tp[0], a[1] - tp[1]); };
  double d_orig = 0.0, d_adv = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    d_orig += dist2d(r.points[i]);
    d_adv += dist2d(r.points[test.size() + i]);
  }
  d_orig /= static_cast<double>(test.size());
  d_adv /= static_cast<double>(test.size());
  double e_orig = 0.0, e_adv = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    e_orig += distance(eo[i], target, cfg.eval.metric);
    e_adv += distance(ea[i], target, cfg.eval.metric);
  }
  e_orig /= static_cast<double>(test.size());
  e_adv /= static_cast<double>(test.size());

  const fs::path dir = L.visual();
  fs::create_directories(dir);
  write_tsne_csv(dir / "tsne.csv", rows, r.points);
  write_tsne_png(dir / "tsne.png", rows, r.points);
  const double kl_min = *std::min_element(r.kl_trace.begin(), r.kl_trace.end());
  nlohmann::json summary = {{"points", x.size()},
                            {"perplexity", tc.perplexity},
                            {"learning_rate", tc.resolved_learning_rate(static_cast<int>(x.size()))},
                            {"final_kl", r.kl_trace.back()},
                            {"min_kl", kl_min},
                            {"mean_tsne_distance_to_target_original", d_orig},
                            {"mean_tsne_distance_to_target_cloaked", d_adv},
                            {"mean_embedding_distance_to_target_original", e_orig},
                            {"mean_embedding_distance_to_target_cloaked", e_adv}};
  write_json(dir / "summary.json", summary);
  write_run_files(dir, cfg, {{"whitebox_hash", wb.weights_hash()}, {"targeted_hash", model.weights_hash()}});
  return summary;
}

// ----------------------------------------------------------------- cloak

CloakFileResult stage_cloak(const RunConfig& cfg, const fs::path& in, const fs::path& out,
                            const std::string& model, double threshold) {
  if (model != "teacher" && model != "student") throw ConfigError("cloak: unknown model '" + model + "'");
  if (!fs::exists(in)) throw MissingArtifact("input image not found: " + in.string());
  const Image image = read_png(in);
  const RunLayout L = layout(cfg);
  const int size = cfg.embedder.input_size;
  if (image.height != size || image.width != size || image.channels != cfg.embedder.channels) {
    throw ConfigError("cloak: input must be " + std::to_string(size) + "x" + std::to_string(size) + " with " +
                      std::to_string(cfg.embedder.channels) + " channels");
  }
  CloakOutput o;
  if (model == "teacher") {
    const AttackModel m = load_attack(L.attack(), "attack model");
    o = cloak(TeacherCloaker(m), image, threshold);
  } else {
    const Student s = load_student(L.student());
    o = cloak(StudentCloaker(s), image, threshold);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_png(out, o.image);
  return {o.seconds, linf_norm(o.delta)};
}

// -------------------------------------------------------------- pipeline

nlohmann::json run_pipeline(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  nlohmann::json timings;
  auto timed = [&](const char* name, auto&& fn) {
    const auto s = Clock::now();
    fn();
    timings[name] = seconds_since(s);
  };
  timed("synth_data", [&] { stage_synth_data(cfg); });
  timed("train_embedder", [&] { stage_train_embedder(cfg, "both"); });
  timed("train_attack", [&] { stage_train_attack(cfg, "all"); });
  timed("distill", [&] { stage_distill(cfg); });
  nlohmann::json report;
  timed("evaluate", [&] { report = stage_evaluate(cfg); });
  if (cfg.targeted.enabled) {
    nlohmann::json vis;
    timed("visualize", [&] { vis = stage_visualize(cfg); });
    report["visualize"] = vis;
  }
  timings["total"] = seconds_since(t0);
  report["timings"] = timings;
  write_json(layout(cfg).eval() / "report.json", report);
  write_json(cfg.out_dir() / "run.json", {{"timings", timings}, {"config", cfg.to_json()}});
  return report;
}

}  // namespace advcloak
