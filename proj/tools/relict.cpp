// Command-line entry point: one subcommand per pipeline step.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "relict/app/commands.hpp"
#include "relict/core/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::string output_root;
  relict::app::CommandOptions opts;
  int workers = 0;
};

void add_common(CLI::App* cmd, Flags& f, bool selection) {
  cmd->add_option("-c,--config", f.config, "Pipeline config (JSON)")->required();
  cmd->add_option("-o,--output-root", f.output_root, "Override the config's output root");
  cmd->add_flag("--allow-any-k", f.opts.allow_any_k, "Accept cluster counts outside 2,4,...,12");
  cmd->add_flag("-v,--verbose", f.opts.verbose, "Progress on stderr");
  if (!selection) return;
  cmd->add_option("--framework", f.opts.frameworks, "standard and/or proposed")->delimiter(',');
  cmd->add_option("--arch", f.opts.architectures, "unet, fpn, linknet")->delimiter(',');
  cmd->add_option("--k", f.opts.k_values, "Cluster counts")->delimiter(',');
  cmd->add_option("--dataset", f.opts.datasets, "Augmented dataset names, e.g. LD30")->delimiter(',');
  cmd->add_option("--workers", f.workers, "Parallel jobs (default from config)");
  cmd->add_flag("--force", f.opts.force, "Use checkpoints produced by a different config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relict landslide detection pipeline: cluster pre-training, segmentation training and evaluation"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "Generate synthetic scenes with ground-truth scar masks"},
      {"prepare-labeled", "Tile the labeled scene, split train/test and label tiles"},
      {"prepare-cluster", "Cluster pixels with k-means and build balanced cluster datasets"},
      {"augment", "Flip-augment positive train tiles (LD30/LD50)"},
      {"pretrain", "Pre-train encoders as cluster classifiers"},
      {"train", "Train segmentation models (standard or proposed framework)"},
      {"predict", "Write probability and binary rasters for the labeled scene"},
      {"evaluate", "Pixel-level precision/recall on the test area"},
      {"grid", "Run every selected combination end to end and write the grid report"},
  };
  for (const auto& [name, help] : commands) {
    auto* cmd = app.add_subcommand(name, help);
    const bool selection = name != "synth" && name != "prepare-labeled";
    add_common(cmd, flags, selection);
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    relict::app::PipelineConfig cfg = relict::app::load_config(flags.config);
    if (!flags.output_root.empty()) cfg.output_root = flags.output_root;
    if (flags.workers > 0) flags.opts.workers = flags.workers;
    const auto summary = relict::app::run_command(command, cfg, flags.opts);
    std::cout << summary.dump() << std::endl;
    return relict::app::kOk;
  } catch (const std::exception& e) {
    const int code = relict::app::exit_code_for(e);
    nlohmann::json line{{"command", command}, {"status", "error"}, {"exit_code", code}, {"message", e.what()}};
    if (const auto* m = dynamic_cast<const relict::MissingArtifactError*>(&e)) line["producer"] = m->producer();
    std::cerr << "error: " << e.what() << std::endl;
    std::cout << line.dump() << std::endl;
    return code;
  }
}
