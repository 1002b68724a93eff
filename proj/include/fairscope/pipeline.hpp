#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairscope/augment.hpp"
#include "fairscope/clustering.hpp"
#include "fairscope/concepts.hpp"
#include "fairscope/dataset.hpp"
#include "fairscope/fairness.hpp"
#include "fairscope/model.hpp"

namespace fairscope {

enum class Mode { vanilla, proposed, variant };
enum class SamplingMode { proportional, bias_aware };          // PS | BS
enum class AugmentMode { mixup, cutmix, freq_masking, freq_cutmix };  // MU CM FM PF

struct VariantSpec {
  ClusterInput clustering = ClusterInput::temporal;  // NC | PC
  bool concepts_on = true;
  SamplingMode sampling = SamplingMode::bias_aware;
  AugmentMode augment = AugmentMode::freq_cutmix;
};

struct PipelineConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  std::filesystem::path concept_dir;  // empty -> data_dir / "concepts"
  Mode mode = Mode::proposed;
  VariantSpec variant;
  GenConfig gen;
  TrainConfig train;
  Index cluster_count = 4;  // K per class
  FreqMaskConfig mask;      // alpha (default 3/4) + layout
  Index pca_dim = 8;        // d'
  Index concept_count = 8;  // L
  Index concept_images = 200;
  double concept_amplitude = 0.5;
  ClusterAlgo cluster_algo = ClusterAlgo::kmeans;
  bool reinit_before_retrain = false;
  bool early_stop = false;
  Index patience = 3;
  std::uint64_t seed = 42;

  std::filesystem::path concept_bank_dir() const {
    return concept_dir.empty() ? data_dir / "concepts" : concept_dir;
  }
  VariantSpec effective_variant() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);
void validate(const PipelineConfig& cfg);

// Dataset splits plus the concept bank.
void run_generate(const PipelineConfig& cfg);

struct TrainOutput {
  std::filesystem::path checkpoint;
  std::vector<double> phase1_loss;
  std::vector<double> retrain_loss;
  std::vector<CssRecord> final_css;  // ranked, descending score
  FairnessReport frame_report;
  FairnessReport video_report;
  // Mean temporal difference of the clustering features (t >= 1), per class.
  std::optional<double> tdiff_real_mean;
  std::optional<double> tdiff_fake_mean;
  double seconds = 0.0;
};

// Runs the configured pipeline: phase 1 vanilla training (or a supplied
// cached checkpoint), then for non-vanilla modes clustering, concept fitting,
// and the augmented re-training loop. Writes checkpoint, reports and
// explanation artifacts under out_dir, then evaluates on the test split.
TrainOutput run_train(const PipelineConfig& cfg,
                      const std::optional<std::filesystem::path>& phase1 = {});

struct EvalOutput {
  FairnessReport frame_report;
  FairnessReport video_report;
};

// Writes metrics.json (frame level), metrics_video.json, metrics.md and
// frame_scores.json under out_dir.
EvalOutput run_evaluate(const std::filesystem::path& checkpoint_path,
                        const std::filesystem::path& manifest_path,
                        const std::filesystem::path& out_dir);

// Per-frame saliency PGMs (at most 5 frames) plus the ranked CSS report for
// one video. `run_dir` must contain checkpoint.ckpt and, when the run had a
// concept phase, css_report.json.
void run_explain(const std::filesystem::path& run_dir,
                 const std::filesystem::path& data_dir,
                 const std::string& video_id,
                 const std::filesystem::path& out_dir);

struct AblationRow {
  std::string name;
  std::string status;  // "ok" or the error message
  std::optional<double> f_eo;
  std::optional<double> auc;
};

// Runs the named variant grid ("table3", "table4" or "both") with a shared
// phase-1 checkpoint; FAIRSCOPE_THREADS caps cell parallelism. Emits
// ablation.md and ablation.json under out_dir.
std::vector<AblationRow> run_ablate(const PipelineConfig& cfg,
                                    const std::string& grid);

// PGM dump of x_i, x_j, LF(x_i), HF(x_i) and the mixed frame for two videos
// (defaults: the first two same-class train videos).
void run_preview(const PipelineConfig& cfg, const std::string& video_i,
                 const std::string& video_j, Index frame_index);

}  // namespace fairscope
