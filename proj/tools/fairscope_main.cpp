#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fairscope/errors.hpp"
#include "fairscope/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string mode;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Pipeline config JSON");
  cmd->add_option("--out", args.out_dir, "Output directory override");
  cmd->add_option("--mode", args.mode,
                  "Pipeline mode override: vanilla | proposed | variant");
  cmd->add_option("--seed", args.seed, "Seed override (also applies to gen)")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

fairscope::PipelineConfig make_config(const CommonArgs& args) {
  fairscope::PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = fairscope::load_config(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.gen.seed = args.seed;
  }
  if (!args.mode.empty()) {
    if (args.mode == "vanilla") cfg.mode = fairscope::Mode::vanilla;
    else if (args.mode == "proposed") cfg.mode = fairscope::Mode::proposed;
    else if (args.mode == "variant") cfg.mode = fairscope::Mode::variant;
    else throw fairscope::ConfigError("unknown mode: " + args.mode);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairscope: fairness-aware deepfake-detection lab on synthetic video"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, ablate_args, preview_args;
  std::string checkpoint_path, manifest_path, eval_out = "eval";
  std::string run_dir = "out", data_dir, video_id, explain_out;
  std::string grid = "both", video_i, video_j;
  fairscope::Index frame_index = 0;

  auto* cmd_generate = app.add_subcommand("generate", "Generate the synthetic dataset and concept bank");
  add_common(cmd_generate, gen_args);

  auto* cmd_train = app.add_subcommand("train", "Run the training pipeline");
  add_common(cmd_train, train_args);
  std::string phase1_path;
  cmd_train->add_option("--phase1", phase1_path, "Reuse a cached phase-1 checkpoint");

  auto* cmd_evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint against a manifest");
  cmd_evaluate->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  cmd_evaluate->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  cmd_evaluate->add_option("--out", eval_out, "Output directory");

  auto* cmd_explain = app.add_subcommand("explain", "Saliency maps and CSS report for one video");
  cmd_explain->add_option("--run", run_dir, "Training run directory")->required();
  cmd_explain->add_option("--data", data_dir, "Dataset directory")->required();
  cmd_explain->add_option("--video", video_id, "Video id")->required();
  cmd_explain->add_option("--out", explain_out, "Output directory (default <run>/explain/<video>)");

  auto* cmd_ablate = app.add_subcommand("ablate", "Run a variant grid and emit a comparison table");
  add_common(cmd_ablate, ablate_args);
  cmd_ablate->add_option("--grid", grid, "table3 | table4 | both");

  auto* cmd_preview = app.add_subcommand("preview-augment", "Write PGM previews of the frequency mix");
  add_common(cmd_preview, preview_args);
  cmd_preview->add_option("--video-i", video_i, "First video id (default: first train video)");
  cmd_preview->add_option("--video-j", video_j, "Partner video id (default: first same-class video)");
  cmd_preview->add_option("--frame", frame_index, "Frame index");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_generate->parsed()) {
      fairscope::run_generate(make_config(gen_args));
      std::cout << "dataset and concept bank written\n";
    } else if (cmd_train->parsed()) {
      const auto cfg = make_config(train_args);
      std::optional<std::filesystem::path> phase1;
      if (!phase1_path.empty()) phase1 = phase1_path;
      const auto out = fairscope::run_train(cfg, phase1);
      std::cout << "checkpoint: " << out.checkpoint.string() << "\n";
      if (out.frame_report.auc)
        std::cout << "test auc (frame): " << *out.frame_report.auc << "\n";
      if (out.frame_report.f_eo)
        std::cout << "test f_eo (frame): " << *out.frame_report.f_eo << "\n";
    } else if (cmd_evaluate->parsed()) {
      fairscope::run_evaluate(checkpoint_path, manifest_path, eval_out);
      std::cout << "metrics written to " << eval_out << "\n";
    } else if (cmd_explain->parsed()) {
      const std::filesystem::path out_path =
          explain_out.empty()
              ? std::filesystem::path(run_dir) / "explain" / video_id
              : std::filesystem::path(explain_out);
      fairscope::run_explain(run_dir, data_dir, video_id, out_path);
      std::cout << "explanation written to " << out_path.string() << "\n";
    } else if (cmd_ablate->parsed()) {
      const auto rows = fairscope::run_ablate(make_config(ablate_args), grid);
      std::cout << "ablation rows: " << rows.size() << "\n";
    } else if (cmd_preview->parsed()) {
      fairscope::run_preview(make_config(preview_args), video_i, video_j, frame_index);
      std::cout << "preview written\n";
    }
  } catch (const fairscope::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
