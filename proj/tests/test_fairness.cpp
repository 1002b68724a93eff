#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "fairscope/errors.hpp"
#include "fairscope/fairness.hpp"
#include "fairscope/rng.hpp"
#include "test_oracles.hpp"

using namespace fairscope;

namespace {

PredictionRecord rec(double score, int label, int group, double threshold = 0.5) {
  return {score, score >= threshold ? 1 : 0, label, group};
}

}  // namespace

TEST_SUITE("fairness") {

TEST_CASE("hand-computed F_FPR example") {
  // Group A reals predicted (1, 0): FPR 0.5. Group B reals (0, 0): FPR 0.
  // Overall FPR 0.25, so the max signed gap is 0.25.
  const std::vector<PredictionRecord> records{
      rec(0.9, 0, 0), rec(0.1, 0, 0), rec(0.2, 0, 1), rec(0.3, 0, 1)};
  CHECK(f_fpr(records) == doctest::Approx(0.25).epsilon(1e-12));
  const FairnessReport report = group_report(records);
  CHECK(*report.f_fpr == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("identical group behavior zeroes all three metrics") {
  std::vector<PredictionRecord> records;
  for (int g = 0; g < 3; ++g) {
    records.push_back(rec(0.9, 1, g));
    records.push_back(rec(0.1, 1, g));
    records.push_back(rec(0.9, 0, g));
    records.push_back(rec(0.1, 0, g));
  }
  CHECK(f_fpr(records) == doctest::Approx(0.0));
  CHECK(f_tpr(records) == doctest::Approx(0.0));
  CHECK(f_eo(records) == doctest::Approx(0.0));
}

TEST_CASE("a single group zeroes all three metrics") {
  const std::vector<PredictionRecord> records{
      rec(0.9, 1, 0), rec(0.2, 1, 0), rec(0.8, 0, 0), rec(0.1, 0, 0)};
  CHECK(f_fpr(records) == doctest::Approx(0.0));
  CHECK(f_tpr(records) == doctest::Approx(0.0));
  CHECK(f_eo(records) == doctest::Approx(0.0));
}

TEST_CASE("metrics are non-negative and F_EO dominates its components") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PredictionRecord> records;
    for (int i = 0; i < 40; ++i)
      records.push_back(rec(rng.uniform01(), static_cast<int>(rng.below(2)),
                            static_cast<int>(rng.below(3))));
    bool has_both = false;
    {
      bool any0 = false, any1 = false;
      for (const auto& r : records) (r.label == 1 ? any1 : any0) = true;
      has_both = any0 && any1;
    }
    if (!has_both) continue;
    const double fpr_gap = f_fpr(records);
    const double tpr_gap = f_tpr(records);
    const double eo = f_eo(records);
    CHECK(fpr_gap >= 0.0);
    CHECK(tpr_gap >= 0.0);
    CHECK(eo >= fpr_gap - 1e-12);
    CHECK(eo >= tpr_gap - 1e-12);
  }
}

TEST_CASE("permutation invariance") {
  Rng rng(5);
  std::vector<PredictionRecord> records;
  for (int i = 0; i < 60; ++i)
    records.push_back(rec(rng.uniform01(), static_cast<int>(rng.below(2)),
                          static_cast<int>(rng.below(4))));
  const double base_eo = f_eo(records);
  const double base_auc = auc(records);
  auto shuffled = records;
  rng.shuffle(shuffled);
  CHECK(f_eo(shuffled) == doctest::Approx(base_eo).epsilon(1e-15));
  CHECK(auc(shuffled) == doctest::Approx(base_auc).epsilon(1e-15));
}

TEST_CASE("metrics error when the required label is missing") {
  const std::vector<PredictionRecord> only_real{rec(0.9, 0, 0), rec(0.1, 0, 0),
                                                rec(0.2, 0, 1), rec(0.3, 0, 1)};
  CHECK_THROWS_AS(f_tpr(only_real), UndefinedMetric);
  CHECK_THROWS_AS(f_eo(only_real), UndefinedMetric);
  CHECK_THROWS_AS(auc(only_real), UndefinedMetric);
  CHECK(f_fpr(only_real) == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("auc edge cases") {
  const std::vector<PredictionRecord> perfect{rec(0.9, 1, 0), rec(0.8, 1, 0),
                                              rec(0.3, 0, 0), rec(0.1, 0, 0)};
  CHECK(auc(perfect) == doctest::Approx(1.0));
  const std::vector<PredictionRecord> inverted{rec(0.9, 0, 0), rec(0.8, 0, 0),
                                               rec(0.3, 1, 0), rec(0.1, 1, 0)};
  CHECK(auc(inverted) == doctest::Approx(0.0));
  const std::vector<PredictionRecord> ties{rec(0.5, 1, 0), rec(0.5, 1, 0),
                                           rec(0.5, 0, 0), rec(0.5, 0, 0)};
  CHECK(auc(ties) == doctest::Approx(0.5));
}

TEST_CASE("auc matches the all-pairs oracle and survives monotone transforms") {
  Rng rng(7);
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<PredictionRecord> records;
  for (int i = 0; i < 80; ++i) {
    double s = rng.uniform01();
    if (rng.below(4) == 0) s = 0.5;  // inject ties
    const int label = static_cast<int>(rng.below(2));
    scores.push_back(s);
    labels.push_back(label);
    records.push_back(rec(s, label, 0));
  }
  const double expect = oracle::auc_bruteforce(scores, labels);
  CHECK(auc(records) == doctest::Approx(expect).epsilon(1e-12));

  auto transformed = records;
  for (auto& r : transformed) r.score = std::exp(3.0 * r.score) + 1.0;
  CHECK(auc(transformed) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("f1 cases") {
  const std::vector<PredictionRecord> perfect{rec(0.9, 1, 0), rec(0.1, 0, 0)};
  CHECK(f1(perfect) == doctest::Approx(1.0));
  const std::vector<PredictionRecord> all_negative{rec(0.1, 1, 0), rec(0.2, 1, 0),
                                                   rec(0.3, 0, 0)};
  CHECK(f1(all_negative) == doctest::Approx(0.0));
  // Precision 0.5, recall 1.0 -> 2/3.
  const std::vector<PredictionRecord> half{rec(0.9, 1, 0), rec(0.8, 0, 0)};
  CHECK(f1(half) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("group report fields and counts") {
  const std::vector<PredictionRecord> records{
      rec(0.9, 0, 0), rec(0.1, 0, 0), rec(0.2, 0, 1), rec(0.3, 0, 1),
      rec(0.8, 1, 0), rec(0.7, 1, 1)};
  const FairnessReport report = group_report(records);
  Index total = 0;
  for (const auto& g : report.groups) total += g.n_real + g.n_fake;
  CHECK(total == static_cast<Index>(records.size()));
  CHECK(report.groups.size() == 2);
  CHECK(*report.groups[0].fpr == doctest::Approx(0.5));
  CHECK(*report.groups[1].fpr == doctest::Approx(0.0));
  CHECK(*report.groups[0].tpr == doctest::Approx(1.0));
  CHECK_THROWS_AS(group_report(std::vector<PredictionRecord>{}), InvalidInput);
}

TEST_CASE("report degrades to null fields instead of failing") {
  const std::vector<PredictionRecord> only_real{rec(0.9, 0, 0), rec(0.1, 0, 1)};
  const FairnessReport report = group_report(only_real);
  CHECK(report.f_fpr.has_value());
  CHECK(!report.f_tpr.has_value());
  CHECK(!report.auc.has_value());
  CHECK(!report.reasons.empty());
}

TEST_CASE("metrics.json carries the exact schema") {
  const std::vector<PredictionRecord> records{
      rec(0.9, 1, 0), rec(0.1, 0, 0), rec(0.7, 1, 1), rec(0.2, 0, 1)};
  const FairnessReport report = group_report(records);
  const auto path = std::filesystem::temp_directory_path() / "fairscope_metrics.json";
  write_metrics_json(path, report);
  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  for (const char* key : {"f_fpr", "f_tpr", "f_eo", "auc", "f1", "groups"})
    CHECK(j.contains(key));
  for (const char* key : {"a", "n_real", "n_fake", "fpr", "tpr"})
    CHECK(j["groups"][0].contains(key));
  std::filesystem::remove(path);
}

TEST_CASE("video aggregation means frame scores") {
  std::vector<FrameScore> frames;
  frames.push_back({"v0", 0, 0.2, 0, 1});
  frames.push_back({"v0", 1, 0.4, 0, 1});
  frames.push_back({"v1", 0, 0.9, 1, 0});
  frames.push_back({"v1", 1, 0.7, 1, 0});
  const auto videos = aggregate_by_video(frames, 0.5);
  REQUIRE(videos.size() == 2);
  CHECK(videos[0].score == doctest::Approx(0.3));
  CHECK(videos[0].predicted == 0);
  CHECK(videos[0].label == 0);
  CHECK(videos[1].score == doctest::Approx(0.8));
  CHECK(videos[1].predicted == 1);
  CHECK(videos[1].group == 0);
}

}  // TEST_SUITE
