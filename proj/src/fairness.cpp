#include "fairscope/fairness.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fairscope/errors.hpp"

namespace fairscope {

std::vector<PredictionRecord> make_records(std::span<const double> scores,
                                           std::span<const int> labels,
                                           std::span<const int> groups,
                                           double threshold) {
  if (scores.size() != labels.size() || scores.size() != groups.size())
    throw InvalidInput("make_records: length mismatch");
  std::vector<PredictionRecord> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out.push_back({scores[i], scores[i] >= threshold ? 1 : 0, labels[i], groups[i]});
  return out;
}

namespace {

// Largest (group rate - overall rate) of predicting positive among samples
// with the given label.
double max_rate_gap(std::span<const PredictionRecord> records, int label) {
  Index overall_n = 0, overall_pos = 0;
  std::map<int, std::pair<Index, Index>> per_group;  // group -> (n, positives)
  for (const auto& r : records) {
    if (r.label != label) continue;
    ++overall_n;
    overall_pos += r.predicted == 1 ? 1 : 0;
    auto& [n, pos] = per_group[r.group];
    ++n;
    pos += r.predicted == 1 ? 1 : 0;
  }
  if (overall_n == 0)
    throw UndefinedMetric("no samples with label " + std::to_string(label));
  const double overall = static_cast<double>(overall_pos) /
                         static_cast<double>(overall_n);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [group, counts] : per_group) {
    const double rate = static_cast<double>(counts.second) /
                        static_cast<double>(counts.first);
    best = std::max(best, rate - overall);
  }
  return best;
}

}  // namespace

double f_fpr(std::span<const PredictionRecord> records) {
  return max_rate_gap(records, 0);
}

double f_tpr(std::span<const PredictionRecord> records) {
  return max_rate_gap(records, 1);
}

double f_eo(std::span<const PredictionRecord> records) {
  return std::max(max_rate_gap(records, 0), max_rate_gap(records, 1));
}

double auc(std::span<const PredictionRecord> records) {
  Index n_pos = 0, n_neg = 0;
  for (const auto& r : records) (r.label == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetric("auc: both classes required");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].score < records[b].score;
  });

  // Average ranks over ties, then the Mann-Whitney U statistic.
  std::vector<double> rank(records.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           records[order[j + 1]].score == records[order[i]].score)
      ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t r = 0; r < records.size(); ++r)
    if (records[r].label == 1) pos_rank_sum += rank[r];
  const double u = pos_rank_sum -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double f1(std::span<const PredictionRecord> records) {
  Index tp = 0, fp = 0, fn = 0;
  for (const auto& r : records) {
    if (r.predicted == 1 && r.label == 1) ++tp;
    if (r.predicted == 1 && r.label == 0) ++fp;
    if (r.predicted == 0 && r.label == 1) ++fn;
  }
  const double precision =
      tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double recall =
      tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

FairnessReport group_report(std::span<const PredictionRecord> records,
                            double threshold) {
  if (records.empty()) throw InvalidInput("group_report: no records");
  FairnessReport report;
  report.threshold = threshold;

  auto compute = [&](const char* metric_name, auto fn) -> std::optional<double> {
    try {
      return fn();
    } catch (const UndefinedMetric& e) {
      report.reasons.push_back(std::string(metric_name) + ": " + e.what());
      return std::nullopt;
    }
  };
  report.f_fpr = compute("f_fpr", [&] { return f_fpr(records); });
  report.f_tpr = compute("f_tpr", [&] { return f_tpr(records); });
  report.f_eo = compute("f_eo", [&] { return f_eo(records); });
  report.auc = compute("auc", [&] { return auc(records); });
  report.f1 = compute("f1", [&] { return f1(records); });

  std::set<int> group_ids;
  for (const auto& r : records) group_ids.insert(r.group);
  for (int g : group_ids) {
    GroupStats stats;
    stats.group = g;
    Index fp = 0, tp = 0;
    for (const auto& r : records) {
      if (r.group != g) continue;
      if (r.label == 0) {
        ++stats.n_real;
        fp += r.predicted == 1 ? 1 : 0;
      } else {
        ++stats.n_fake;
        tp += r.predicted == 1 ? 1 : 0;
      }
    }
    if (stats.n_real > 0)
      stats.fpr = static_cast<double>(fp) / static_cast<double>(stats.n_real);
    if (stats.n_fake > 0)
      stats.tpr = static_cast<double>(tp) / static_cast<double>(stats.n_fake);
    report.groups.push_back(stats);
  }
  return report;
}

std::vector<PredictionRecord> aggregate_by_video(
    std::span<const FrameScore> frames, double threshold) {
  // Preserve first-appearance order for determinism.
  std::vector<std::string> order;
  std::map<std::string, std::tuple<double, Index, int, int>> acc;
  for (const auto& f : frames) {
    auto it = acc.find(f.video);
    if (it == acc.end()) {
      order.push_back(f.video);
      acc.emplace(f.video, std::make_tuple(f.score, Index{1}, f.label, f.group));
    } else {
      std::get<0>(it->second) += f.score;
      std::get<1>(it->second) += 1;
    }
  }
  std::vector<PredictionRecord> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const auto& [sum, n, label, group] = acc.at(id);
    const double mean = sum / static_cast<double>(n);
    out.push_back({mean, mean >= threshold ? 1 : 0, label, group});
  }
  return out;
}

namespace {

nlohmann::ordered_json to_json(const FairnessReport& r) {
  nlohmann::ordered_json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v)
      j[key] = *v;
    else
      j[key] = nullptr;
  };
  put("f_fpr", r.f_fpr);
  put("f_tpr", r.f_tpr);
  put("f_eo", r.f_eo);
  put("auc", r.auc);
  put("f1", r.f1);
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : r.groups) {
    nlohmann::ordered_json jg;
    jg["a"] = g.group;
    jg["n_real"] = g.n_real;
    jg["n_fake"] = g.n_fake;
    jg["fpr"] = g.fpr ? nlohmann::ordered_json(*g.fpr) : nlohmann::ordered_json(nullptr);
    jg["tpr"] = g.tpr ? nlohmann::ordered_json(*g.tpr) : nlohmann::ordered_json(nullptr);
    j["groups"].push_back(jg);
  }
  if (!r.reasons.empty()) j["reasons"] = r.reasons;
  return j;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << *v;
  return os.str();
}

}  // namespace

void write_metrics_json(const std::filesystem::path& path,
                        const FairnessReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("write_metrics_json: cannot open " + path.string());
  out << to_json(report).dump(2) << "\n";
}

std::string metrics_markdown_header() {
  return "| run | F_FPR | F_EO | F_TPR | F1 | AUC |\n"
         "|-----|-------|------|-------|----|-----|\n";
}

std::string metrics_markdown_row(const std::string& run_name,
                                 const FairnessReport& r) {
  std::ostringstream os;
  os << "| " << run_name << " | " << fmt(r.f_fpr) << " | " << fmt(r.f_eo)
     << " | " << fmt(r.f_tpr) << " | " << fmt(r.f1) << " | " << fmt(r.auc)
     << " |\n";
  return os.str();
}

}  // namespace fairscope
