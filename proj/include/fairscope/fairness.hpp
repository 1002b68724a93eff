#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairscope/types.hpp"

namespace fairscope {

struct PredictionRecord {
  double score = 0.0;  // fake probability
  int predicted = 0;   // score >= threshold
  int label = 0;
  int group = 0;
};

std::vector<PredictionRecord> make_records(std::span<const double> scores,
                                           std::span<const int> labels,
                                           std::span<const int> groups,
                                           double threshold = 0.5);

// Max over groups of (group rate - overall rate), signed as defined; groups
// with no samples of the conditioning label are skipped. Throws
// UndefinedMetric when no sample of a required label exists at all.
double f_fpr(std::span<const PredictionRecord> records);
double f_tpr(std::span<const PredictionRecord> records);
double f_eo(std::span<const PredictionRecord> records);

// Probability that a random positive outscores a random negative, ties
// counted one half. Throws UndefinedMetric when either class is absent.
double auc(std::span<const PredictionRecord> records);

// Harmonic mean of precision and recall at the records' threshold; 0 when
// precision + recall is 0.
double f1(std::span<const PredictionRecord> records);

struct GroupStats {
  int group = 0;
  Index n_real = 0;
  Index n_fake = 0;
  std::optional<double> fpr;
  std::optional<double> tpr;
};

struct FairnessReport {
  std::optional<double> f_fpr;
  std::optional<double> f_tpr;
  std::optional<double> f_eo;
  std::optional<double> auc;
  std::optional<double> f1;
  std::vector<std::string> reasons;  // one entry per undefined metric
  std::vector<GroupStats> groups;
  double threshold = 0.5;
};

// All metrics plus the per-group table; undefined metrics become null fields
// with a reason instead of propagating.
FairnessReport group_report(std::span<const PredictionRecord> records,
                            double threshold = 0.5);

// Mean frame score per video, thresholded once per video.
struct FrameScore {
  std::string video;
  Index frame = 0;
  double score = 0.0;
  int label = 0;
  int group = 0;
};
std::vector<PredictionRecord> aggregate_by_video(
    std::span<const FrameScore> frames, double threshold = 0.5);

// metrics.json: {f_fpr, f_tpr, f_eo, auc, f1, groups: [{a, n_real, n_fake,
// fpr, tpr}]}.
void write_metrics_json(const std::filesystem::path& path,
                        const FairnessReport& report);

// One table row per run for metrics.md.
std::string metrics_markdown_row(const std::string& run_name,
                                 const FairnessReport& report);
std::string metrics_markdown_header();

}  // namespace fairscope
