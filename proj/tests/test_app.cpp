#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "relict/app/commands.hpp"
#include "relict/core/error.hpp"
#include "support.hpp"

using namespace relict;
using namespace relict::app;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the CLI and returns its exit status.
int run_cli(const std::string& args, std::string* out = nullptr) {
  const char* cli = std::getenv("RELICT_CLI");
  REQUIRE(cli != nullptr);
  testing::TempDir tmp("cli_out");
  const std::string cmd = std::string(cli) + " " + args + " > " + (tmp / "stdout").string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  if (out) *out = slurp(tmp / "stdout");
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("pipeline config round trips and rejects unknown keys") {
  testing::TempDir dir("cfg");
  const auto cfg = testing::micro_pipeline(dir.path());
  CHECK(PipelineConfig::from_json(cfg.to_json()) == cfg);
  CHECK(PipelineConfig::from_json(PipelineConfig{}.to_json()) == PipelineConfig{});
  auto j = cfg.to_json();
  j["learning_rate"] = 0.1;
  CHECK_THROWS_AS(PipelineConfig::from_json(j), ConfigError);

  auto moved = cfg;
  moved.output_root = "elsewhere";
  moved.workers = 8;
  CHECK(moved.hash() == cfg.hash());
  moved.threshold = 0.6;
  CHECK(moved.hash() != cfg.hash());

  auto bad = cfg;
  bad.k_values = {3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(bad.validate(true));
  bad = cfg;
  bad.encoder_preset = "huge";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config files resolve paths against their directory") {
  testing::TempDir dir("cfgfile");
  fs::create_directories(dir / "sub");
  write_text(dir / "sub/p.json",
             R"({"output_root": "../out", "labeled_scene": "scene.tif", "labels": "inv.geojson", "cluster_scenes": ["a.tif"]})");
  const auto cfg = load_config(dir / "sub/p.json", false);
  CHECK(cfg.output_root == (dir.path() / "out").lexically_normal());
  CHECK(*cfg.labeled_scene == dir.path() / "sub/scene.tif");
  CHECK(cfg.cluster_scenes.front() == dir.path() / "sub/a.tif");

  ::setenv(kOutputRootEnv, (dir / "env").c_str(), 1);
  CHECK(load_config(dir / "sub/p.json").output_root == dir / "env");
  ::unsetenv(kOutputRootEnv);

  write_text(dir / "broken.json", "{not json");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);
}

TEST_CASE("command selection filters the configured grid") {
  PipelineConfig cfg;
  CHECK(selected_combinations(cfg, {}).size() == 42);
  CommandOptions o;
  o.frameworks = {"proposed"};
  o.architectures = {"fpn"};
  o.k_values = {4};
  const auto sel = selected_combinations(cfg, o);
  CHECK(sel.size() == 2);
  for (const auto& c : sel) CHECK(c.k == 4);
  o.architectures = {"segnet"};
  CHECK_THROWS_AS(selected_combinations(cfg, o), ConfigError);
  CHECK_THROWS_AS(run_command("fly", cfg, {}), ConfigError);
}

TEST_CASE("exit codes map error kinds") {
  CHECK(exit_code_for(ConfigError("x")) == kConfigError);
  CHECK(exit_code_for(MissingArtifactError("x", "train")) == kMissingDependency);
  CHECK(exit_code_for(NumericalError("x")) == kRuntimeFailure);
  CHECK(exit_code_for(std::runtime_error("x")) == kRuntimeFailure);
}

TEST_CASE("stages run in order and refuse to skip ahead") {
  testing::TempDir dir("stages");
  const auto cfg = testing::micro_pipeline(dir / "run");
  const Layout L{cfg.output_root};
  CommandOptions o;

  CHECK_THROWS_AS(cmd_prepare_labeled(cfg, o), MissingArtifactError);
  cmd_synth(cfg, o);
  CHECK(fs::exists(cfg.synthetic_scene_path(0)));
  CHECK(fs::exists(cfg.synthetic_mask_path()));

  CHECK_THROWS_AS(cmd_augment(cfg, o), MissingArtifactError);
  cmd_prepare_labeled(cfg, o);
  CHECK(fs::exists(L.labeled_dir() / "manifest.json"));
  cmd_augment(cfg, o);
  CHECK(fs::exists(L.augmented_dir("LD30") / "manifest.json"));

  CHECK_THROWS_AS(cmd_pretrain(cfg, o), MissingArtifactError);
  cmd_prepare_cluster(cfg, o);
  CHECK(fs::exists(L.cluster_dir(2) / "manifest.json"));

  CommandOptions proposed = o;
  proposed.frameworks = {"proposed"};
  try {
    cmd_train(cfg, proposed);
    FAIL("training the proposed framework without pre-trained weights should fail");
  } catch (const MissingArtifactError& e) {
    CHECK(e.producer() == "pretrain");
  }
  cmd_pretrain(cfg, o);
  CHECK(fs::exists(L.pretrain_weights(2)));

  CHECK_THROWS_AS(cmd_evaluate(cfg, o), MissingArtifactError);
  cmd_train(cfg, o);
  const training::Combination std_combo{training::Framework::standard, models::Architecture::unet, std::nullopt, "LD30"};
  const training::Combination prop_combo{training::Framework::proposed, models::Architecture::unet, 2, "LD30"};
  CHECK(fs::exists(L.final_weights(std_combo)));
  CHECK(fs::exists(L.final_weights(prop_combo)));

  cmd_predict(cfg, o);
  const auto summary = cmd_evaluate(cfg, o);
  CHECK(fs::exists(L.evaluation_dir(prop_combo) / "report.json"));
  CHECK(fs::exists(L.evaluation_dir(prop_combo) / "outcome.tif"));

  const auto grid = cmd_grid(cfg, o);
  const auto csv = read_grid_csv(cfg);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(fs::exists(L.grid_dir() / "comparison.json"));

  SUBCASE("a changed config is refused unless forced") {
    auto other = cfg;
    other.threshold = 0.7;
    CHECK_THROWS_AS(cmd_evaluate(other, o), ConfigError);
    CommandOptions forced = o;
    forced.force = true;
    CHECK_NOTHROW(cmd_evaluate(other, forced));
  }
}

TEST_CASE("cli exit codes") {
  testing::TempDir dir("cli");
  const auto cfg = testing::micro_pipeline(dir / "run");
  write_text(dir / "cfg.json", cfg.to_json().dump(2));
  write_text(dir / "bad.json", R"({"tile_size": -4})");

  std::string out;
  CHECK(run_cli("synth -c " + (dir / "cfg.json").string(), &out) == 0);
  CHECK(nlohmann::json::parse(out).is_object());
  CHECK(run_cli("train -c " + (dir / "cfg.json").string(), &out) == 3);
  CHECK(nlohmann::json::parse(out)["exit_code"] == 3);
  CHECK(run_cli("synth -c " + (dir / "bad.json").string()) == 2);
  CHECK(run_cli("synth -c " + (dir / "missing.json").string()) == 2);
  CHECK(run_cli("train -c " + (dir / "cfg.json").string() + " --arch segnet") == 2);
  CHECK(run_cli("synth -c " + (dir / "cfg.json").string() + " -o " + (dir / "alt").string()) == 0);
  CHECK(fs::exists(dir / "alt"));
}
