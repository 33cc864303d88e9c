#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ADVCLOAK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advcloak_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("every subcommand answers --help") {
  CHECK(run("--help") == 0);
  for (const char* sub : {"synth-data", "train-embedder", "train-attack", "distill", "evaluate", "visualize",
                          "cloak", "pipeline"}) {
    CHECK_MESSAGE(run(std::string(sub) + " --help") == 0, sub);
  }
}

TEST_CASE("usage and configuration errors exit 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train-attack --variant nope") == 2);
  const fs::path d = scratch("cfg");
  std::ofstream(d / "unknown.json") << R"({"attack": {"epochz": 1}})";
  CHECK(run("synth-data --config " + (d / "unknown.json").string()) == 2);
  CHECK(run("synth-data --config " + (d / "absent.json").string()) == 2);
  fs::remove_all(d);
}

TEST_CASE("missing upstream artifacts exit 3") {
  const fs::path d = scratch("missing");
  const std::string out = " --out-dir " + d.string();
  CHECK(run("train-embedder" + out) == 3);
  CHECK(run("evaluate" + out) == 3);
  CHECK(run("distill" + out) == 3);
  CHECK(run("cloak --in " + (d / "x.png").string() + " --out " + (d / "y.png").string() + out) == 3);
  fs::remove_all(d);
}

TEST_CASE("synth-data writes a dataset") {
  const fs::path d = scratch("synth");
  std::ofstream(d / "small.json")
      << R"({"dataset": {"synthetic": {"num_identities": 6, "images_per_identity": 6}}})";
  CHECK(run("synth-data --config " + (d / "small.json").string() + " --out-dir " + (d / "run").string()) == 0);
  CHECK(fs::exists(d / "run" / "data" / "manifest.json"));
  fs::remove_all(d);
}
