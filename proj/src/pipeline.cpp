#include "fairscope/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "fairscope/errors.hpp"
#include "fairscope/numerics.hpp"

namespace fairscope {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kPhase1Stream = 0x5031u;
constexpr std::uint64_t kRetrainStream = 0x5034u;
constexpr std::uint64_t kClusterStream = 0x434cu;
constexpr std::uint64_t kEnvStream = 0x454eu;
constexpr std::uint64_t kAugStream = 0x4155u;

struct FrameTable {
  std::vector<LabeledFrame> frames;
  std::vector<Index> video_of;    // frame id -> video index
  std::vector<Index> frame_of;    // frame id -> frame index within the video
  std::vector<std::string> video_ids;
  std::vector<int> video_labels;
  std::vector<std::vector<Index>> frames_of_video;
};

FrameTable build_frame_table(const LoadedDataset& ds) {
  FrameTable t;
  for (std::size_t v = 0; v < ds.videos.size(); ++v) {
    const auto& video = ds.videos[v];
    t.video_ids.push_back(video.id);
    t.video_labels.push_back(video.label);
    std::vector<Index> ids;
    for (std::size_t f = 0; f < video.frames.size(); ++f) {
      ids.push_back(static_cast<Index>(t.frames.size()));
      t.frames.push_back({video.frames[f], video.label});
      t.video_of.push_back(static_cast<Index>(v));
      t.frame_of.push_back(static_cast<Index>(f));
    }
    t.frames_of_video.push_back(std::move(ids));
  }
  return t;
}

MatX extract_features(const MlpParams& params, const std::vector<LabeledFrame>& frames) {
  MatX h(static_cast<Index>(frames.size()), params.feature_dim());
  for (std::size_t i = 0; i < frames.size(); ++i)
    h.row(static_cast<Index>(i)) = feature_extract(params, frames[i].frame).transpose();
  return h;
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::vanilla: return "vanilla";
    case Mode::proposed: return "proposed";
    default: return "variant";
  }
}

std::string clustering_name(ClusterInput c) {
  return c == ClusterInput::naive ? "nc" : "pc";
}
std::string sampling_name(SamplingMode s) {
  return s == SamplingMode::proportional ? "ps" : "bs";
}
std::string augment_name(AugmentMode a) {
  switch (a) {
    case AugmentMode::mixup: return "mu";
    case AugmentMode::cutmix: return "cm";
    case AugmentMode::freq_masking: return "fm";
    default: return "pf";
  }
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void write_json_file(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

ordered_json css_to_json(const std::vector<CssRecord>& records) {
  ordered_json arr = ordered_json::array();
  int rank = 1;
  for (const auto& r : records) {
    ordered_json j;
    j["concept"] = r.name;
    j["score"] = r.score;
    j["class"] = r.assoc_class;
    j["rank"] = rank++;
    arr.push_back(j);
  }
  return arr;
}

std::vector<CssRecord> ranked(std::vector<CssRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const CssRecord& a, const CssRecord& b) {
                     return a.score > b.score;
                   });
  return records;
}

}  // namespace

VariantSpec PipelineConfig::effective_variant() const {
  if (mode == Mode::proposed) return VariantSpec{};  // PC + concepts + BS + PF
  return variant;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).template get<std::decay_t<decltype(dst)>>();
  };
  std::string tmp;

  if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("concept_dir")) cfg.concept_dir = j.at("concept_dir").get<std::string>();

  if (j.contains("mode")) {
    tmp = j.at("mode").get<std::string>();
    if (tmp == "vanilla") cfg.mode = Mode::vanilla;
    else if (tmp == "proposed") cfg.mode = Mode::proposed;
    else if (tmp == "variant") cfg.mode = Mode::variant;
    else throw ConfigError("unknown mode: " + tmp);
  }

  if (j.contains("variant")) {
    const auto& jv = j.at("variant");
    if (jv.contains("clustering")) {
      tmp = jv.at("clustering").get<std::string>();
      if (tmp == "nc") cfg.variant.clustering = ClusterInput::naive;
      else if (tmp == "pc") cfg.variant.clustering = ClusterInput::temporal;
      else throw ConfigError("unknown clustering: " + tmp);
    }
    if (jv.contains("concepts")) cfg.variant.concepts_on = jv.at("concepts").get<bool>();
    if (jv.contains("sampling")) {
      tmp = jv.at("sampling").get<std::string>();
      if (tmp == "ps") cfg.variant.sampling = SamplingMode::proportional;
      else if (tmp == "bs") cfg.variant.sampling = SamplingMode::bias_aware;
      else throw ConfigError("unknown sampling: " + tmp);
    }
    if (jv.contains("augment")) {
      tmp = jv.at("augment").get<std::string>();
      if (tmp == "mu") cfg.variant.augment = AugmentMode::mixup;
      else if (tmp == "cm") cfg.variant.augment = AugmentMode::cutmix;
      else if (tmp == "fm") cfg.variant.augment = AugmentMode::freq_masking;
      else if (tmp == "pf") cfg.variant.augment = AugmentMode::freq_cutmix;
      else throw ConfigError("unknown augment: " + tmp);
    }
  }

  get("seed", cfg.seed);
  cfg.gen.seed = cfg.seed;
  if (j.contains("gen")) {
    const auto& jg = j.at("gen");
    auto g = [&](const char* key, auto& dst) {
      if (jg.contains(key)) dst = jg.at(key).template get<std::decay_t<decltype(dst)>>();
    };
    g("height", cfg.gen.height);
    g("width", cfg.gen.width);
    g("train_videos", cfg.gen.train_videos);
    g("val_videos", cfg.gen.val_videos);
    g("test_videos", cfg.gen.test_videos);
    g("frames_per_video", cfg.gen.frames_per_video);
    g("groups", cfg.gen.groups);
    g("fake_fraction", cfg.gen.fake_fraction);
    g("bias_strength", cfg.gen.bias_strength);
    g("artifact_amplitude", cfg.gen.artifact_amplitude);
    g("temporal_jitter", cfg.gen.temporal_jitter);
    g("signature_amplitude", cfg.gen.signature_amplitude);
    g("drift_amplitude", cfg.gen.drift_amplitude);
    g("noise_amplitude", cfg.gen.noise_amplitude);
    g("seed", cfg.gen.seed);
    if (jg.contains("artifact_band")) {
      cfg.gen.artifact_band.lo = jg.at("artifact_band").at("lo").get<Index>();
      cfg.gen.artifact_band.hi = jg.at("artifact_band").at("hi").get<Index>();
    }
  }

  if (j.contains("train")) {
    const auto& jt = j.at("train");
    auto g = [&](const char* key, auto& dst) {
      if (jt.contains(key)) dst = jt.at(key).template get<std::decay_t<decltype(dst)>>();
    };
    g("batch_size", cfg.train.batch_size);
    g("epochs", cfg.train.epochs);
    g("learning_rate", cfg.train.learning_rate);
    g("hidden", cfg.train.hidden);
    g("feature_dim", cfg.train.feature_dim);
  }

  get("k", cfg.cluster_count);
  if (j.contains("alpha")) cfg.mask.alpha = j.at("alpha").get<double>();
  if (j.contains("mask_layout")) {
    tmp = j.at("mask_layout").get<std::string>();
    if (tmp == "literal") cfg.mask.layout = MaskLayout::literal;
    else if (tmp == "centered") cfg.mask.layout = MaskLayout::centered;
    else throw ConfigError("unknown mask layout: " + tmp);
  }
  get("pca_dim", cfg.pca_dim);
  if (j.contains("concepts")) {
    const auto& jc = j.at("concepts");
    if (jc.contains("count")) cfg.concept_count = jc.at("count").get<Index>();
    if (jc.contains("images_per_side"))
      cfg.concept_images = jc.at("images_per_side").get<Index>();
    if (jc.contains("amplitude"))
      cfg.concept_amplitude = jc.at("amplitude").get<double>();
  }
  if (j.contains("cluster_algo")) {
    tmp = j.at("cluster_algo").get<std::string>();
    if (tmp == "kmeans") cfg.cluster_algo = ClusterAlgo::kmeans;
    else if (tmp == "diag_em") cfg.cluster_algo = ClusterAlgo::diag_em;
    else throw ConfigError("unknown cluster algo: " + tmp);
  }
  get("reinit_before_retrain", cfg.reinit_before_retrain);
  get("early_stop", cfg.early_stop);
  get("patience", cfg.patience);
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config json: " + std::string(e.what()));
  }
  return config_from_json(j);
}

nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["data_dir"] = cfg.data_dir.string();
  j["out_dir"] = cfg.out_dir.string();
  j["concept_dir"] = cfg.concept_bank_dir().string();
  j["mode"] = mode_name(cfg.mode);
  const VariantSpec v = cfg.effective_variant();
  j["variant"] = {{"clustering", clustering_name(v.clustering)},
                  {"concepts", v.concepts_on},
                  {"sampling", sampling_name(v.sampling)},
                  {"augment", augment_name(v.augment)}};
  j["gen"] = {{"height", cfg.gen.height},
              {"width", cfg.gen.width},
              {"train_videos", cfg.gen.train_videos},
              {"val_videos", cfg.gen.val_videos},
              {"test_videos", cfg.gen.test_videos},
              {"frames_per_video", cfg.gen.frames_per_video},
              {"groups", cfg.gen.groups},
              {"fake_fraction", cfg.gen.fake_fraction},
              {"bias_strength", cfg.gen.bias_strength},
              {"artifact_amplitude", cfg.gen.artifact_amplitude},
              {"artifact_band", {{"lo", cfg.gen.artifact_band.lo}, {"hi", cfg.gen.artifact_band.hi}}},
              {"temporal_jitter", cfg.gen.temporal_jitter},
              {"signature_amplitude", cfg.gen.signature_amplitude},
              {"drift_amplitude", cfg.gen.drift_amplitude},
              {"noise_amplitude", cfg.gen.noise_amplitude},
              {"seed", cfg.gen.seed}};
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"learning_rate", cfg.train.learning_rate},
                {"hidden", cfg.train.hidden},
                {"feature_dim", cfg.train.feature_dim}};
  j["k"] = cfg.cluster_count;
  j["alpha"] = cfg.mask.alpha;
  j["mask_layout"] = cfg.mask.layout == MaskLayout::literal ? "literal" : "centered";
  j["pca_dim"] = cfg.pca_dim;
  j["concepts"] = {{"count", cfg.concept_count},
                   {"images_per_side", cfg.concept_images},
                   {"amplitude", cfg.concept_amplitude}};
  j["cluster_algo"] = cfg.cluster_algo == ClusterAlgo::kmeans ? "kmeans" : "diag_em";
  j["reinit_before_retrain"] = cfg.reinit_before_retrain;
  j["early_stop"] = cfg.early_stop;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  return j;
}

void validate(const PipelineConfig& cfg) {
  validate(cfg.gen);
  if (cfg.mode == Mode::variant && !cfg.variant.concepts_on &&
      cfg.variant.sampling == SamplingMode::bias_aware)
    throw ConfigError("variant: concepts off forces proportional sampling");
  if (cfg.cluster_count < 1) throw ConfigError("k must be positive");
  if (cfg.pca_dim < 1) throw ConfigError("pca_dim must be positive");
  if (cfg.mask.alpha < 0.0 || cfg.mask.alpha > 1.0)
    throw ConfigError("alpha must be in [0, 1]");
  if (cfg.concept_count < 1) throw ConfigError("concept count must be positive");
  if (cfg.concept_images < 2) throw ConfigError("concept images per side must be >= 2");
  if (cfg.train.batch_size < 1 || cfg.train.epochs < 0 ||
      cfg.train.learning_rate <= 0.0 || cfg.train.hidden < 1 ||
      cfg.train.feature_dim < 1)
    throw ConfigError("train config values must be positive");
}

void run_generate(const PipelineConfig& cfg) {
  validate(cfg);
  generate_dataset(cfg.gen, cfg.data_dir);
  generate_concept_bank(cfg.gen, cfg.concept_count, cfg.concept_images,
                        cfg.concept_amplitude, cfg.concept_bank_dir());
}

namespace {

// Shared state for the augmented re-training loop that follows clustering
// and concept fitting.
struct RetrainContext {
  const PipelineConfig* cfg = nullptr;
  const FrameTable* table = nullptr;
  const std::vector<ConceptVector>* vectors = nullptr;
  std::vector<std::vector<std::vector<bool>>> presence;  // [y][k][l]
  std::vector<std::vector<Index>> cluster_sizes;         // [y][k]
  std::vector<std::vector<std::vector<Index>>> members;  // [y][k] -> frame ids
  std::vector<std::pair<int, Index>> assignment;         // frame id -> (y, k)

  SamplingMode sampling = SamplingMode::bias_aware;
  AugmentMode augment = AugmentMode::freq_cutmix;

  Rng env_rng{0};
  Rng aug_rng{0};
  std::optional<std::vector<CssRecord>> css_cache;
  SamplingWeights weights;  // size-only at start; CSS-weighted once available

  std::vector<LabeledFrame> operator()(std::span<const Index> ids,
                                       const MlpParams& current) {
    const Index k = cfg->cluster_count;
    const auto envs = form_environments(k, env_rng);

    if (sampling == SamplingMode::bias_aware) {
      std::vector<MatX> ms;
      for (const auto& env : envs) {
        std::vector<LabeledFrame> env_members;
        for (Index id : ids) {
          const auto [y, cluster] = assignment[static_cast<std::size_t>(id)];
          const Index want = y == 0 ? env.cluster0 : env.cluster1;
          if (cluster == want)
            env_members.push_back(table->frames[static_cast<std::size_t>(id)]);
        }
        if (!env_members.empty())
          ms.push_back(gradient_matrix(current, env_members));
      }
      // Fewer than two populated environments: reuse the previous CSS.
      if (ms.size() >= 2) {
        css_cache = css(*vectors, ms);
        weights = sampling_weights(cluster_sizes, *css_cache, presence);
      }
    }

    std::vector<LabeledFrame> out;
    out.reserve(ids.size());
    for (Index id : ids) {
      const auto& src = table->frames[static_cast<std::size_t>(id)];
      Tensor2D mixed;
      if (augment == AugmentMode::freq_masking) {
        mixed = freq_mask(src.frame, aug_rng);
      } else {
        const bool size_only =
            sampling == SamplingMode::proportional || !css_cache.has_value();
        const Index partner =
            sample_partner(id, src.label, weights, members, aug_rng, size_only);
        const Tensor2D& xj = table->frames[static_cast<std::size_t>(partner)].frame;
        switch (augment) {
          case AugmentMode::mixup:
            mixed = mixup(src.frame, xj, aug_rng);
            break;
          case AugmentMode::cutmix:
            mixed = cutmix(src.frame, xj, aug_rng);
            break;
          default:
            mixed = freq_cutmix(src.frame, xj, cfg->mask, aug_rng);
            break;
        }
      }
      out.push_back({std::move(mixed), src.label});
    }
    return out;
  }
};

EvalOutput evaluate_params(const MlpParams& params, const LoadedDataset& test,
                           const std::filesystem::path& out_dir) {
  std::vector<FrameScore> frame_scores;
  for (const auto& video : test.videos)
    for (std::size_t f = 0; f < video.frames.size(); ++f)
      frame_scores.push_back({video.id, static_cast<Index>(f),
                              fake_score(params, video.frames[f]), video.label,
                              video.group});

  std::vector<PredictionRecord> frame_records;
  frame_records.reserve(frame_scores.size());
  for (const auto& fsc : frame_scores)
    frame_records.push_back(
        {fsc.score, fsc.score >= 0.5 ? 1 : 0, fsc.label, fsc.group});
  const auto video_records = aggregate_by_video(frame_scores, 0.5);

  EvalOutput out;
  out.frame_report = group_report(frame_records, 0.5);
  out.video_report = group_report(video_records, 0.5);

  std::filesystem::create_directories(out_dir);
  write_metrics_json(out_dir / "metrics.json", out.frame_report);
  write_metrics_json(out_dir / "metrics_video.json", out.video_report);
  {
    std::ofstream md(out_dir / "metrics.md", std::ios::binary);
    md << metrics_markdown_header()
       << metrics_markdown_row("frame", out.frame_report)
       << metrics_markdown_row("video", out.video_report);
  }
  ordered_json scores = ordered_json::array();
  for (const auto& fsc : frame_scores) {
    ordered_json j;
    j["video"] = fsc.video;
    j["frame"] = fsc.frame;
    j["score"] = fsc.score;
    j["label"] = fsc.label;
    j["group"] = fsc.group;
    scores.push_back(j);
  }
  write_json_file(out_dir / "frame_scores.json", scores);
  return out;
}

}  // namespace

TrainOutput run_train(const PipelineConfig& cfg,
                      const std::optional<std::filesystem::path>& phase1) {
  validate(cfg);
  const double started = now_seconds();
  std::filesystem::create_directories(cfg.out_dir);

  const LoadedDataset train_ds = load_dataset(cfg.data_dir / "train.json");
  const FrameTable table = build_frame_table(train_ds);
  const VariantSpec variant = cfg.effective_variant();

  TrainOutput out;
  ordered_json timings;

  // Optional early stop on validation loss plateau; applies to the
  // re-training loop, whose epoch budget stands in for "until convergence".
  // Phase 1 always runs the fixed budget so cached checkpoints are
  // comparable across variants.
  std::vector<LabeledFrame> val_frames;
  if (cfg.early_stop) {
    const LoadedDataset val_ds = load_dataset(cfg.data_dir / "val.json");
    for (const auto& v : val_ds.videos)
      for (const auto& f : v.frames) val_frames.push_back({f, v.label});
  }
  double best_val = std::numeric_limits<double>::infinity();
  Index epochs_since_best = 0;
  const EpochCallback early_stop_cb =
      [&](Index, double, const MlpParams& params) -> bool {
    if (!cfg.early_stop || val_frames.empty()) return false;
    const double val_loss = loss_and_grads(params, val_frames).loss;
    if (val_loss < best_val - 1e-9) {
      best_val = val_loss;
      epochs_since_best = 0;
      return false;
    }
    return ++epochs_since_best >= cfg.patience;
  };

  // Phase 1: vanilla training (or the shared cached checkpoint).
  double t0 = now_seconds();
  MlpParams params0;
  if (phase1) {
    params0 = load_checkpoint(*phase1).params;
  } else {
    TrainConfig p1 = cfg.train;
    p1.seed = mix_seed(cfg.seed, kPhase1Stream);
    const TrainResult r1 = train(table.frames, p1);
    params0 = r1.params;
    out.phase1_loss = r1.epoch_loss;
    save_checkpoint(cfg.out_dir / "phase1.ckpt", params0,
                    {cfg.gen.height, cfg.gen.width, cfg.seed, p1.epochs});
  }
  timings["phase1_s"] = now_seconds() - t0;

  MlpParams final_params = params0;

  if (cfg.mode != Mode::vanilla) {
    // Phase 2: clustering inputs and per-class clusters.
    t0 = now_seconds();
    const MatX features = extract_features(params0, table.frames);
    const Index d_prime =
        std::min({cfg.pca_dim, features.cols(), features.rows()});
    const MatX reduced = pca_transform_rows(pca_fit(features, d_prime), features);

    std::vector<VecX> reduced_vecs;
    reduced_vecs.reserve(static_cast<std::size_t>(reduced.rows()));
    for (Index i = 0; i < reduced.rows(); ++i)
      reduced_vecs.push_back(reduced.row(i).transpose());
    const Standardizer scaler = Standardizer::fit(reduced_vecs);

    std::vector<std::vector<VecX>> per_video;
    for (const auto& ids : table.frames_of_video) {
      std::vector<VecX> seq;
      for (Index id : ids)
        seq.push_back(scaler.apply(reduced_vecs[static_cast<std::size_t>(id)]));
      per_video.push_back(std::move(seq));
    }
    const std::vector<VecX> inputs =
        build_cluster_inputs(per_video, variant.clustering);

    {
      double d_sum[2] = {0.0, 0.0};
      Index d_count[2] = {0, 0};
      for (std::size_t v = 0; v < per_video.size(); ++v) {
        const auto diffs = temporal_difference(per_video[v]);
        const int y = table.video_labels[v];
        for (std::size_t t = 1; t < diffs.size(); ++t) {
          d_sum[y] += diffs[t];
          ++d_count[y];
        }
      }
      if (d_count[0] > 0)
        out.tdiff_real_mean = d_sum[0] / static_cast<double>(d_count[0]);
      if (d_count[1] > 0)
        out.tdiff_fake_mean = d_sum[1] / static_cast<double>(d_count[1]);
    }

    ClusterModel clusters;
    clusters.k = cfg.cluster_count;
    Rng cluster_rng(mix_seed(cfg.seed, kClusterStream));
    for (int y = 0; y < 2; ++y) {
      std::vector<VecX> class_points;
      auto& ids = clusters.frame_ids[static_cast<std::size_t>(y)];
      for (std::size_t i = 0; i < table.frames.size(); ++i)
        if (table.frames[i].label == y) {
          class_points.push_back(inputs[i]);
          ids.push_back(static_cast<Index>(i));
        }
      Rng class_rng = cluster_rng.child(static_cast<std::uint64_t>(y));
      clusters.fits[static_cast<std::size_t>(y)] =
          fit_clusters(class_points, cfg.cluster_count, class_rng, cfg.cluster_algo);
    }

    {
      ordered_json dump = ordered_json::array();
      for (int y = 0; y < 2; ++y) {
        const auto& fit = clusters.fits[static_cast<std::size_t>(y)];
        const auto& ids = clusters.frame_ids[static_cast<std::size_t>(y)];
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const Index id = ids[i];
          ordered_json j;
          j["video"] = table.video_ids[static_cast<std::size_t>(
              table.video_of[static_cast<std::size_t>(id)])];
          j["frame"] = table.frame_of[static_cast<std::size_t>(id)];
          j["class"] = y;
          j["cluster"] = fit.assignment[i];
          dump.push_back(j);
        }
      }
      write_json_file(cfg.out_dir / "clusters.json", dump);
    }
    timings["phase2_s"] = now_seconds() - t0;

    // Phase 3: concept vectors and frozen presence sets.
    t0 = now_seconds();
    RetrainContext ctx;
    ctx.cfg = &cfg;
    ctx.table = &table;
    ctx.sampling = variant.sampling;
    ctx.augment = variant.augment;
    ctx.env_rng = Rng(mix_seed(cfg.seed, kEnvStream));
    ctx.aug_rng = Rng(mix_seed(cfg.seed, kAugStream));
    ctx.members = {clusters.members()[0], clusters.members()[1]};
    ctx.cluster_sizes.assign(2, std::vector<Index>(
                                    static_cast<std::size_t>(cfg.cluster_count), 0));
    for (int y = 0; y < 2; ++y)
      for (Index k = 0; k < cfg.cluster_count; ++k)
        ctx.cluster_sizes[static_cast<std::size_t>(y)][static_cast<std::size_t>(k)] =
            static_cast<Index>(ctx.members[static_cast<std::size_t>(y)]
                                          [static_cast<std::size_t>(k)].size());
    ctx.assignment.assign(table.frames.size(), {0, 0});
    for (int y = 0; y < 2; ++y) {
      const auto& fit = clusters.fits[static_cast<std::size_t>(y)];
      const auto& ids = clusters.frame_ids[static_cast<std::size_t>(y)];
      for (std::size_t i = 0; i < ids.size(); ++i)
        ctx.assignment[static_cast<std::size_t>(ids[i])] = {y, fit.assignment[i]};
    }
    // Size-only weights serve proportional sampling and the batches before
    // the first CSS becomes available.
    ctx.weights = sampling_weights(ctx.cluster_sizes, {}, {});

    std::vector<ConceptVector> vectors;
    if (variant.concepts_on) {
      const auto bank =
          load_concept_bank(cfg.concept_bank_dir(), cfg.gen.height, cfg.gen.width);
      if (bank.empty()) throw ConfigError("concept bank is empty");
      for (const auto& entry : bank) {
        std::vector<LabeledFrame> pos_frames, neg_frames;
        for (const auto& img : entry.images.pos) pos_frames.push_back({img, 1});
        for (const auto& img : entry.images.neg) neg_frames.push_back({img, 0});
        const MatX pos_h = extract_features(params0, pos_frames);
        const MatX neg_h = extract_features(params0, neg_frames);
        auto cv = fit_concept_vector(entry.spec.name, pos_h, neg_h);
        if (cv.low_quality)
          std::cerr << "[fairscope] warning: low-quality concept probe '"
                    << cv.name << "' (accuracy " << cv.probe_accuracy << ")\n";
        vectors.push_back(std::move(cv));
      }

      const VecX global_mean = features.colwise().mean();
      ctx.presence.assign(2, {});
      for (int y = 0; y < 2; ++y) {
        auto& cls = ctx.presence[static_cast<std::size_t>(y)];
        cls.resize(static_cast<std::size_t>(cfg.cluster_count));
        for (Index k = 0; k < cfg.cluster_count; ++k) {
          const auto& member_ids =
              ctx.members[static_cast<std::size_t>(y)][static_cast<std::size_t>(k)];
          if (member_ids.empty()) {
            cls[static_cast<std::size_t>(k)].assign(vectors.size(), false);
            continue;
          }
          MatX member_features(static_cast<Index>(member_ids.size()), features.cols());
          for (std::size_t i = 0; i < member_ids.size(); ++i)
            member_features.row(static_cast<Index>(i)) =
                features.row(member_ids[i]);
          cls[static_cast<std::size_t>(k)] =
              concept_presence(member_features, global_mean, vectors);
        }
      }

      ordered_json fitted = ordered_json::array();
      for (const auto& cv : vectors)
        fitted.push_back({{"name", cv.name},
                          {"probe_accuracy", cv.probe_accuracy},
                          {"low_quality", cv.low_quality}});
      write_json_file(cfg.out_dir / "concepts_fitted.json", fitted);
    }
    ctx.vectors = &vectors;
    timings["phase3_s"] = now_seconds() - t0;

    // Phase 4: augmented re-training per the configured variant.
    t0 = now_seconds();
    TrainConfig p4 = cfg.train;
    p4.seed = mix_seed(cfg.seed, kRetrainStream);
    const MlpParams* warm = cfg.reinit_before_retrain ? nullptr : &params0;
    AugmentHook hook = [&ctx](std::span<const Index> ids, const MlpParams& current) {
      return ctx(ids, current);
    };
    const TrainResult r4 = train(table.frames, p4, hook, warm, early_stop_cb);
    final_params = r4.params;
    out.retrain_loss = r4.epoch_loss;
    timings["phase4_s"] = now_seconds() - t0;

    if (ctx.css_cache) {
      out.final_css = ranked(*ctx.css_cache);
      write_json_file(cfg.out_dir / "css_report.json", css_to_json(out.final_css));
    }
  }

  const auto checkpoint_path = cfg.out_dir / "checkpoint.ckpt";
  save_checkpoint(checkpoint_path, final_params,
                  {cfg.gen.height, cfg.gen.width, cfg.seed, cfg.train.epochs});
  out.checkpoint = checkpoint_path;

  // Test-split evaluation through the standard interface (the only place the
  // group attribute is surfaced).
  const LoadedDataset test_ds = load_dataset(cfg.data_dir / "test.json");
  const EvalOutput eval = evaluate_params(final_params, test_ds, cfg.out_dir);
  out.frame_report = eval.frame_report;
  out.video_report = eval.video_report;
  out.seconds = now_seconds() - started;

  ordered_json report;
  report["config"] = config_to_json(cfg);
  timings["total_s"] = out.seconds;
  report["timings"] = timings;
  report["phase1_loss"] = out.phase1_loss;
  report["retrain_loss"] = out.retrain_loss;
  if (out.tdiff_real_mean && out.tdiff_fake_mean)
    report["temporal_difference"] = {{"real_mean", *out.tdiff_real_mean},
                                     {"fake_mean", *out.tdiff_fake_mean}};
  {
    std::ifstream metrics(cfg.out_dir / "metrics.json");
    nlohmann::json m;
    metrics >> m;
    report["fairness"] = m;
  }
  ordered_json top = ordered_json::array();
  for (std::size_t i = 0; i < out.final_css.size() && i < 3; ++i)
    top.push_back({{"concept", out.final_css[i].name},
                   {"score", out.final_css[i].score},
                   {"class", out.final_css[i].assoc_class}});
  report["top_css"] = top;
  report["artifacts"] = {{"checkpoint", checkpoint_path.string()},
                         {"metrics", (cfg.out_dir / "metrics.json").string()}};
  write_json_file(cfg.out_dir / "run_report.json", report);
  return out;
}

EvalOutput run_evaluate(const std::filesystem::path& checkpoint_path,
                        const std::filesystem::path& manifest_path,
                        const std::filesystem::path& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const LoadedDataset ds = load_dataset(manifest_path);
  if (ck.meta.height != ds.height || ck.meta.width != ds.width)
    throw ConfigError("checkpoint extent does not match the dataset");
  return evaluate_params(ck.params, ds, out_dir);
}

void run_explain(const std::filesystem::path& run_dir,
                 const std::filesystem::path& data_dir,
                 const std::string& video_id,
                 const std::filesystem::path& out_dir) {
  const Checkpoint ck = load_checkpoint(run_dir / "checkpoint.ckpt");

  // Locate the video in any split.
  std::optional<VideoSample> video;
  for (const char* split : {"test", "val", "train"}) {
    const auto manifest_path = data_dir / (std::string(split) + ".json");
    if (!std::filesystem::exists(manifest_path)) continue;
    const DatasetManifest m = read_manifest(manifest_path);
    for (const auto& v : m.videos)
      if (v.id == video_id) {
        VideoSample s;
        s.id = v.id;
        s.label = v.label;
        s.frames = read_frames(data_dir / v.file, v.frames, m.height, m.width);
        video = std::move(s);
        break;
      }
    if (video) break;
  }
  if (!video) throw ConfigError("unknown video id: " + video_id);

  std::filesystem::create_directories(out_dir);
  const std::size_t frame_count = std::min<std::size_t>(video->frames.size(), 5);
  for (std::size_t t = 0; t < frame_count; ++t)
    write_pgm(out_dir / ("frame_" + std::to_string(t) + ".pgm"),
              saliency_map(ck.params, video->frames[t]));

  const auto css_path = run_dir / "css_report.json";
  if (!std::filesystem::exists(css_path))
    throw ConfigError("run has no css_report.json (concept phase not completed)");
  std::ifstream in(css_path);
  nlohmann::json css_json;
  in >> css_json;
  write_json_file(out_dir / "css.json", css_json);
}

std::vector<AblationRow> run_ablate(const PipelineConfig& cfg,
                                    const std::string& grid) {
  validate(cfg);
  struct Cell {
    std::string name;
    VariantSpec variant;
  };
  std::vector<Cell> cells;
  const VariantSpec pc_cb_bs{};  // PC + concepts + BS + PF
  if (grid == "table3" || grid == "both") {
    cells.push_back({"t3_A_nc_cb_bs", {ClusterInput::naive, true, SamplingMode::bias_aware, AugmentMode::freq_cutmix}});
    cells.push_back({"t3_B_nc_ps", {ClusterInput::naive, false, SamplingMode::proportional, AugmentMode::freq_cutmix}});
    cells.push_back({"t3_C_pc_ps", {ClusterInput::temporal, false, SamplingMode::proportional, AugmentMode::freq_cutmix}});
    cells.push_back({"t3_D_pc_cb_bs", pc_cb_bs});
  }
  if (grid == "table4" || grid == "both") {
    cells.push_back({"t4_A_mu", {ClusterInput::temporal, true, SamplingMode::bias_aware, AugmentMode::mixup}});
    cells.push_back({"t4_B_cm", {ClusterInput::temporal, true, SamplingMode::bias_aware, AugmentMode::cutmix}});
    cells.push_back({"t4_C_fm", {ClusterInput::temporal, true, SamplingMode::bias_aware, AugmentMode::freq_masking}});
    cells.push_back({"t4_D_pf", pc_cb_bs});
  }
  if (cells.empty()) throw ConfigError("unknown ablation grid: " + grid);

  std::filesystem::create_directories(cfg.out_dir);

  // Shared phase-1 checkpoint: identical seed and config across cells.
  PipelineConfig vanilla_cfg = cfg;
  vanilla_cfg.mode = Mode::vanilla;
  vanilla_cfg.out_dir = cfg.out_dir / "phase1";
  run_train(vanilla_cfg);
  const auto phase1_path = vanilla_cfg.out_dir / "phase1.ckpt";

  Index threads = 1;
  if (const char* env = std::getenv("FAIRSCOPE_THREADS")) {
    threads = std::max<Index>(1, std::atoi(env));
  }

  std::vector<AblationRow> rows(cells.size());
  auto run_cell = [&](std::size_t i) {
    const auto& cell = cells[i];
    AblationRow row;
    row.name = cell.name;
    try {
      PipelineConfig cell_cfg = cfg;
      cell_cfg.mode = Mode::variant;
      cell_cfg.variant = cell.variant;
      cell_cfg.out_dir = cfg.out_dir / "cells" / cell.name;
      const TrainOutput to = run_train(cell_cfg, phase1_path);
      row.status = "ok";
      row.f_eo = to.frame_report.f_eo;
      row.auc = to.frame_report.auc;
    } catch (const std::exception& e) {
      row.status = e.what();
    }
    rows[i] = std::move(row);
  };

  for (std::size_t start = 0; start < cells.size();
       start += static_cast<std::size_t>(threads)) {
    std::vector<std::thread> pool;
    const std::size_t end =
        std::min(cells.size(), start + static_cast<std::size_t>(threads));
    for (std::size_t i = start; i < end; ++i) pool.emplace_back(run_cell, i);
    for (auto& t : pool) t.join();
  }

  std::ofstream md(cfg.out_dir / "ablation.md", std::ios::binary);
  md << "| variant | F_EO | AUC | status |\n|---------|------|-----|--------|\n";
  ordered_json jrows = ordered_json::array();
  for (const auto& row : rows) {
    auto fmt = [](const std::optional<double>& v) {
      if (!v) return std::string("n/a");
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", *v);
      return std::string(buf);
    };
    md << "| " << row.name << " | " << fmt(row.f_eo) << " | " << fmt(row.auc)
       << " | " << row.status << " |\n";
    ordered_json j;
    j["name"] = row.name;
    j["status"] = row.status;
    j["f_eo"] = row.f_eo ? ordered_json(*row.f_eo) : ordered_json(nullptr);
    j["auc"] = row.auc ? ordered_json(*row.auc) : ordered_json(nullptr);
    jrows.push_back(j);
  }
  write_json_file(cfg.out_dir / "ablation.json", jrows);
  return rows;
}

void run_preview(const PipelineConfig& cfg, const std::string& video_i,
                 const std::string& video_j, Index frame_index) {
  const LoadedDataset ds = load_dataset(cfg.data_dir / "train.json");
  if (ds.videos.empty()) throw ConfigError("empty train split");

  auto find = [&](const std::string& id) -> const VideoSample* {
    for (const auto& v : ds.videos)
      if (v.id == id) return &v;
    throw ConfigError("unknown video id: " + id);
  };

  const VideoSample* vi = nullptr;
  const VideoSample* vj = nullptr;
  if (!video_i.empty()) vi = find(video_i);
  if (!video_j.empty()) vj = find(video_j);
  if (vi == nullptr) vi = &ds.videos.front();
  if (vj == nullptr) {
    for (const auto& v : ds.videos)
      if (&v != vi && v.label == vi->label) {
        vj = &v;
        break;
      }
  }
  if (vj == nullptr) throw ConfigError("no same-class partner video found");
  const auto t = static_cast<std::size_t>(
      std::clamp<Index>(frame_index, 0, static_cast<Index>(vi->frames.size()) - 1));

  Rng rng(mix_seed(cfg.seed, kAugStream));
  write_augment_preview(cfg.out_dir / "preview", vi->frames[t],
                        vj->frames[std::min(t, vj->frames.size() - 1)], cfg.mask,
                        rng);
}

}  // namespace fairscope
