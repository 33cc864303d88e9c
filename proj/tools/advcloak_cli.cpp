// advcloak: synthetic data, embedder and attack training, distillation,
// evaluation and single-image cloaking.
//
// Exit codes: 0 ok, 1 internal failure, 2 configuration error, 3 missing
// upstream artifact.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "advcloak/config.hpp"
#include "advcloak/errors.hpp"
#include "advcloak/kernels.hpp"
#include "advcloak/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON); defaults apply when omitted");
  cmd->add_option("--seed", f.seed, "Top-level seed, overrides the config");
  cmd->add_flag("--deterministic", f.deterministic, "Force the scalar kernels and single-threaded execution");
  cmd->add_option("--out-dir", f.out_dir, "Output root, overrides paths.out_dir");
}

advcloak::RunConfig resolve(const CommonFlags& f) {
  advcloak::RunConfig cfg = f.config.empty() ? advcloak::RunConfig{} : advcloak::RunConfig::load(f.config);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.apply_seeds();
  }
  if (!f.out_dir.empty()) cfg.paths.out_dir = f.out_dir;
  if (f.deterministic) advcloak::kernels::set_isa(advcloak::kernels::Isa::kScalar);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial face cloaking toolkit"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* synth = app.add_subcommand("synth-data", "Render the synthetic identity dataset");
  auto* train_emb = app.add_subcommand("train-embedder", "Train the white-box and/or black-box embedder");
  std::string which = "both";
  train_emb->add_option("--model", which, "whitebox | blackbox | both")->check(CLI::IsMember({"whitebox", "blackbox", "both"}));
  auto* train_att = app.add_subcommand("train-attack", "Train the perturbation generator");
  std::string variant = "all";
  train_att->add_option("--variant", variant, "main | ablation | targeted | all")
      ->check(CLI::IsMember({"main", "ablation", "targeted", "all"}));
  auto* dist = app.add_subcommand("distill", "Distill the attack model into the student U-Net");
  auto* eval = app.add_subcommand("evaluate", "Measure success rates, blur robustness and image quality");
  auto* vis = app.add_subcommand("visualize", "t-SNE of original and targeted-cloaked embeddings");
  auto* cloak_cmd = app.add_subcommand("cloak", "Cloak a single PNG and print the elapsed seconds");
  std::string in, out, model = "teacher";
  std::optional<double> threshold;
  cloak_cmd->add_option("--in", in, "Input PNG")->required();
  cloak_cmd->add_option("--out", out, "Output PNG")->required();
  cloak_cmd->add_option("--model", model, "teacher | student")->check(CLI::IsMember({"teacher", "student"}));
  cloak_cmd->add_option("--threshold", threshold, "L-infinity bound, default attack.pert.threshold");
  auto* pipe = app.add_subcommand("pipeline", "synth-data, train-embedder, train-attack, distill, evaluate, visualize");

  for (auto* c : {synth, train_emb, train_att, dist, eval, vis, cloak_cmd, pipe}) add_common(c, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const advcloak::RunConfig cfg = resolve(flags);
    if (*synth) {
      advcloak::stage_synth_data(cfg);
      std::cout << "dataset written to " << cfg.data_dir().string() << "\n";
    } else if (*train_emb) {
      advcloak::stage_train_embedder(cfg, which);
    } else if (*train_att) {
      advcloak::stage_train_attack(cfg, variant);
    } else if (*dist) {
      advcloak::stage_distill(cfg);
    } else if (*eval) {
      const auto report = advcloak::stage_evaluate(cfg);
      std::cout << report.at("models").dump(2) << "\n";
    } else if (*vis) {
      std::cout << advcloak::stage_visualize(cfg).dump(2) << "\n";
    } else if (*cloak_cmd) {
      const auto r = advcloak::stage_cloak(cfg, in, out, model, threshold.value_or(cfg.attack.pert.threshold));
      std::printf("%.6f\n", r.seconds);
    } else if (*pipe) {
      const auto report = advcloak::run_pipeline(cfg);
      std::cout << report.at("models").dump(2) << "\n";
      std::cout << "total seconds: " << report.at("timings").at("total").get<double>() << "\n";
    }
    return 0;
  } catch (const advcloak::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const advcloak::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
