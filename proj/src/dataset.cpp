#include "fairscope/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "fairscope/errors.hpp"
#include "fairscope/rng.hpp"

namespace fairscope {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kSplitStreamBase = 0x5350u;  // split seeds
constexpr std::uint64_t kBankStream = 0x42414eu;     // concept bank seed

std::string zero_pad(Index n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

// Smooth background: a handful of Gaussian bumps around a mid-gray base.
struct Background {
  struct Bump {
    double cr, cc, sigma, amp;
  };
  std::vector<Bump> bumps;
  double base = 0.45;

  static Background sample(Index h, Index w, Rng& rng) {
    Background bg;
    for (int i = 0; i < 3; ++i) {
      Background::Bump b;
      b.cr = rng.uniform(0.2, 0.8) * static_cast<double>(h);
      b.cc = rng.uniform(0.2, 0.8) * static_cast<double>(w);
      b.sigma = rng.uniform(0.15, 0.30) * static_cast<double>(std::min(h, w));
      b.amp = rng.uniform(0.10, 0.20);
      bg.bumps.push_back(b);
    }
    return bg;
  }

  double value(double r, double c) const {
    double v = base;
    for (const auto& b : bumps) {
      const double dr = r - b.cr, dc = c - b.cc;
      v += b.amp * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
    }
    return v;
  }
};

// Per-group brightness gradient: a planar ramp whose direction depends only
// on the group index. Purely low-frequency, so the proposed augmentation can
// mix it between samples.
double group_signature(Index r, Index c, Index h, Index w, int group, int groups) {
  const double theta = std::numbers::pi * static_cast<double>(group) /
                       static_cast<double>(std::max(groups, 1));
  const double rc = (static_cast<double>(c) - static_cast<double>(w - 1) / 2.0) /
                    static_cast<double>(w);
  const double rr = (static_cast<double>(r) - static_cast<double>(h - 1) / 2.0) /
                    static_cast<double>(h);
  return rc * std::cos(theta) + rr * std::sin(theta);
}

// Quota-based assignment so realized fractions match the configuration
// exactly (up to rounding), independent of sample count.
std::vector<std::pair<int, int>> label_group_quotas(const GenConfig& cfg, Index n,
                                                    Rng& rng) {
  const Index n_fake = static_cast<Index>(
      std::llround(cfg.fake_fraction * static_cast<double>(n)));
  const Index n_real = n - n_fake;

  std::vector<std::pair<int, int>> slots;
  slots.reserve(static_cast<std::size_t>(n));

  // Fakes: group 0 takes round(b * n_fake); the rest round-robin over the
  // remaining groups (or over all groups when there is only one).
  const Index fake_g0 = static_cast<Index>(
      std::llround(cfg.bias_strength * static_cast<double>(n_fake)));
  for (Index i = 0; i < fake_g0; ++i) slots.emplace_back(1, 0);
  const int other_groups = std::max(cfg.groups - 1, 1);
  for (Index i = 0; i < n_fake - fake_g0; ++i)
    slots.emplace_back(1, cfg.groups > 1 ? 1 + static_cast<int>(i) % other_groups : 0);

  // Reals: even round-robin over all groups.
  for (Index i = 0; i < n_real; ++i)
    slots.emplace_back(0, static_cast<int>(i) % cfg.groups);

  rng.shuffle(slots);
  return slots;
}

std::vector<Tensor2D> render_video(const GenConfig& cfg, int label, int group,
                                   std::uint64_t video_seed) {
  Rng rng(video_seed);
  const Index h = cfg.height, w = cfg.width, t_count = cfg.frames_per_video;

  Background bg = Background::sample(h, w, rng);
  const double drift_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ddr = std::sin(drift_dir) * cfg.drift_amplitude;
  const double ddc = std::cos(drift_dir) * cfg.drift_amplitude;
  const double sig_amp =
      cfg.signature_amplitude * rng.uniform(0.9, 1.1);

  // Grating coordinates: min-frequency in the configured band on both axes,
  // realized as unshifted bins; sign of the frequency drawn per axis.
  Index grate_u = 0, grate_v = 0;
  double phase0 = 0.0;
  if (label == 1) {
    const std::uint64_t span = static_cast<std::uint64_t>(cfg.artifact_band.hi -
                                                          cfg.artifact_band.lo + 1);
    const Index mu = cfg.artifact_band.lo + static_cast<Index>(rng.below(span));
    const Index mv = cfg.artifact_band.lo + static_cast<Index>(rng.below(span));
    grate_u = rng.below(2) == 0 ? mu : (h - mu) % h;
    grate_v = rng.below(2) == 0 ? mv : (w - mv) % w;
    phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  std::vector<Tensor2D> frames;
  frames.reserve(static_cast<std::size_t>(t_count));
  for (Index t = 0; t < t_count; ++t) {
    const double phase =
        label == 1 ? phase0 + cfg.temporal_jitter * rng.uniform(-1.0, 1.0) : 0.0;
    Tensor2D frame(h, w);
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) {
        double v = bg.value(static_cast<double>(r) - ddr * static_cast<double>(t),
                            static_cast<double>(c) - ddc * static_cast<double>(t));
        v += sig_amp * group_signature(r, c, h, w, group, cfg.groups);
        if (label == 1) {
          v += cfg.artifact_amplitude *
               std::cos(2.0 * std::numbers::pi *
                            (static_cast<double>(grate_u * r) / static_cast<double>(h) +
                             static_cast<double>(grate_v * c) / static_cast<double>(w)) +
                        phase);
        }
        v += cfg.noise_amplitude * rng.uniform(-1.0, 1.0);
        frame(r, c) = std::clamp(v, 0.0, 1.0);
      }
    frames.push_back(std::move(frame));
  }
  return frames;
}

int split_stream(const std::string& split) {
  if (split == "train") return 1;
  if (split == "val") return 2;
  if (split == "test") return 3;
  throw ConfigError("unknown split: " + split);
}

// Concept pattern families. Patterns 0..G-1 are the group signature ramps.
Tensor2D concept_pattern(const ConceptSpec& spec, Index h, Index w, int groups) {
  Tensor2D p(h, w);
  const double pi = std::numbers::pi;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const double rr = (static_cast<double>(r) - static_cast<double>(h - 1) / 2.0) /
                        static_cast<double>(h);
      const double cc = (static_cast<double>(c) - static_cast<double>(w - 1) / 2.0) /
                        static_cast<double>(w);
      double v = 0.0;
      if (spec.pattern < groups) {
        v = group_signature(r, c, h, w, spec.pattern, groups);
      } else {
        // Filler families: mid-frequency textures with no demographic
        // component, so only the signature concepts should score as biased.
        switch (spec.pattern - groups) {
          case 0:  // checkerboard
            v = 0.5 * std::cos(2.0 * pi * 4.0 * rr) * std::cos(2.0 * pi * 4.0 * cc);
            break;
          case 1:  // horizontal stripes
            v = 0.5 * std::cos(2.0 * pi * 4.0 * rr);
            break;
          case 2:  // vertical stripes
            v = 0.5 * std::cos(2.0 * pi * 4.0 * cc);
            break;
          case 3:  // diagonal stripes
            v = 0.5 * std::cos(2.0 * pi * 3.0 * (rr + cc));
            break;
          case 4:  // dot grid
            v = 0.5 * std::cos(2.0 * pi * 3.0 * rr) * std::cos(2.0 * pi * 3.0 * cc);
            break;
          default:  // rings
            v = 0.5 * std::cos(2.0 * pi * 5.0 * std::sqrt(rr * rr + cc * cc));
            break;
        }
      }
      p(r, c) = v;
    }
  return p;
}

}  // namespace

void validate(const GenConfig& cfg) {
  if (cfg.height < 2 || cfg.width < 2)
    throw ConfigError("gen: height and width must be at least 2");
  if (cfg.train_videos < 1 || cfg.val_videos < 1 || cfg.test_videos < 1)
    throw ConfigError("gen: every split needs at least one video");
  if (cfg.frames_per_video < 2)
    throw ConfigError("gen: frames per video must be at least 2");
  if (cfg.groups < 1 || cfg.groups > 8)
    throw ConfigError("gen: groups must be in [1, 8]");
  if (cfg.fake_fraction < 0.0 || cfg.fake_fraction > 1.0)
    throw ConfigError("gen: fake fraction must be in [0, 1]");
  if (cfg.bias_strength < 0.0 || cfg.bias_strength > 1.0)
    throw ConfigError("gen: bias strength must be in [0, 1]");
  if (cfg.artifact_band.lo > cfg.artifact_band.hi ||
      cfg.artifact_band.lo < 1 ||
      cfg.artifact_band.hi > std::min(cfg.height, cfg.width) / 2)
    throw ConfigError("gen: artifact band must satisfy 1 <= lo <= hi <= min(H,W)/2");

  // The band must lie strictly outside the default low-frequency mask,
  // otherwise the proposed augmentation could erase the planted artifact.
  const FreqMaskConfig default_mask;
  const auto keep_u = axis_mask(cfg.height, default_mask.alpha, default_mask.layout);
  const auto keep_v = axis_mask(cfg.width, default_mask.alpha, default_mask.layout);
  for (Index m = cfg.artifact_band.lo; m <= cfg.artifact_band.hi; ++m) {
    const bool u_in = keep_u[static_cast<std::size_t>(m)] ||
                      keep_u[static_cast<std::size_t>((cfg.height - m) % cfg.height)];
    const bool v_in = keep_v[static_cast<std::size_t>(m)] ||
                      keep_v[static_cast<std::size_t>((cfg.width - m) % cfg.width)];
    if (u_in || v_in)
      throw ConfigError(
          "gen: artifact band overlaps the default low-frequency mask");
  }
}

void write_frames(const std::filesystem::path& path,
                  const std::vector<Tensor2D>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorruptDataset("write_frames: cannot open " + path.string());
  for (const auto& f : frames) {
    std::vector<float> row(static_cast<std::size_t>(f.cols()));
    for (Index r = 0; r < f.rows(); ++r) {
      for (Index c = 0; c < f.cols(); ++c)
        row[static_cast<std::size_t>(c)] = static_cast<float>(f(r, c));
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
}

std::vector<Tensor2D> read_frames(const std::filesystem::path& path,
                                  Index expected, Index h, Index w) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw CorruptDataset("read_frames: cannot open " + path.string());
  const auto size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t want =
      static_cast<std::uint64_t>(expected) * static_cast<std::uint64_t>(h) *
      static_cast<std::uint64_t>(w) * sizeof(float);
  if (size != want)
    throw CorruptDataset("read_frames: " + path.string() + " has " +
                         std::to_string(size) + " bytes, expected " +
                         std::to_string(want));
  in.seekg(0);
  std::vector<Tensor2D> frames;
  frames.reserve(static_cast<std::size_t>(expected));
  std::vector<float> buf(static_cast<std::size_t>(h * w));
  for (Index t = 0; t < expected; ++t) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    Tensor2D f(h, w);
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) {
        const float v = buf[static_cast<std::size_t>(r * w + c)];
        if (!std::isfinite(v))
          throw CorruptDataset("read_frames: non-finite value in " + path.string());
        f(r, c) = static_cast<double>(v);
      }
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  ordered_json j;
  j["version"] = m.version;
  j["height"] = m.height;
  j["width"] = m.width;
  j["split"] = m.split;
  j["videos"] = ordered_json::array();
  for (const auto& v : m.videos) {
    ordered_json jv;
    jv["id"] = v.id;
    jv["label"] = v.label;
    jv["group"] = v.group;
    jv["frames"] = v.frames;
    jv["file"] = v.file;
    j["videos"].push_back(jv);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorruptDataset("write_manifest: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptDataset("read_manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptDataset("read_manifest: " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  m.height = j.at("height").get<Index>();
  m.width = j.at("width").get<Index>();
  m.split = j.at("split").get<std::string>();
  for (const auto& jv : j.at("videos")) {
    ManifestVideo v;
    v.id = jv.at("id").get<std::string>();
    v.label = jv.at("label").get<int>();
    if (v.label != 0 && v.label != 1)
      throw CorruptDataset("read_manifest: label must be 0 or 1");
    // The training pipeline never reads this field for non-test splits; it is
    // optional there so stripped manifests stay loadable.
    v.group = jv.contains("group") ? jv.at("group").get<int>() : -1;
    v.frames = jv.at("frames").get<Index>();
    v.file = jv.at("file").get<std::string>();
    m.videos.push_back(std::move(v));
  }
  if (m.split == "test")
    for (const auto& v : m.videos)
      if (v.group < 0)
        throw CorruptDataset("read_manifest: test manifest requires group");
  return m;
}

DatasetManifest generate_split(const GenConfig& cfg, const std::string& split,
                               const std::filesystem::path& dir) {
  validate(cfg);
  std::filesystem::create_directories(dir);
  const Index n = split == "train"  ? cfg.train_videos
                  : split == "val" ? cfg.val_videos
                                   : cfg.test_videos;
  const std::uint64_t split_seed =
      mix_seed(cfg.seed, kSplitStreamBase + static_cast<std::uint64_t>(split_stream(split)));
  Rng quota_rng = Rng(split_seed).child(0);

  const auto slots = label_group_quotas(cfg, n, quota_rng);

  DatasetManifest manifest;
  manifest.height = cfg.height;
  manifest.width = cfg.width;
  manifest.split = split;
  for (Index i = 0; i < n; ++i) {
    const auto [label, group] = slots[static_cast<std::size_t>(i)];
    const std::uint64_t video_seed = mix_seed(split_seed, static_cast<std::uint64_t>(i) + 1);
    const auto frames = render_video(cfg, label, group, video_seed);
    ManifestVideo mv;
    mv.id = split + "_" + zero_pad(i, 4);
    mv.label = label;
    mv.group = group;
    mv.frames = cfg.frames_per_video;
    mv.file = mv.id + ".bin";
    write_frames(dir / mv.file, frames);
    manifest.videos.push_back(std::move(mv));
  }
  write_manifest(dir / (split + ".json"), manifest);
  return manifest;
}

void generate_dataset(const GenConfig& cfg, const std::filesystem::path& dir) {
  generate_split(cfg, "train", dir);
  generate_split(cfg, "val", dir);
  generate_split(cfg, "test", dir);
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  LoadedDataset ds;
  ds.height = m.height;
  ds.width = m.width;
  ds.split = m.split;
  const bool expose_group = m.split == "test";
  for (const auto& v : m.videos) {
    VideoSample s;
    s.id = v.id;
    s.label = v.label;
    s.group = expose_group ? v.group : -1;
    s.frames = read_frames(dir / v.file, v.frames, m.height, m.width);
    ds.videos.push_back(std::move(s));
  }
  return ds;
}

ConceptImages generate_concept_set(const ConceptSpec& spec, Index count,
                                   Index h, Index w, double amplitude,
                                   std::uint64_t seed, int groups) {
  if (count < 2) throw InvalidInput("generate_concept_set: count must be >= 2");
  Rng rng(seed);
  const Tensor2D pattern = concept_pattern(spec, h, w, std::clamp(groups, 1, 8));

  ConceptImages out;
  for (Index i = 0; i < count; ++i) {
    Background bg = Background::sample(h, w, rng);
    Tensor2D base(h, w);
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c)
        base(r, c) = bg.value(static_cast<double>(r), static_cast<double>(c)) +
                     0.02 * rng.uniform(-1.0, 1.0);
    Tensor2D pos = base + amplitude * pattern;
    pos = pos.cwiseMax(0.0).cwiseMin(1.0);
    Tensor2D neg = base.cwiseMax(0.0).cwiseMin(1.0);
    out.pos.push_back(std::move(pos));
    out.neg.push_back(std::move(neg));
  }
  return out;
}

std::vector<ConceptSpec> default_concept_specs(int groups, Index count) {
  static const char* extras[] = {"checker",   "stripes_h", "stripes_v",
                                 "stripes_d", "dots",      "rings"};
  std::vector<ConceptSpec> specs;
  for (Index l = 0; l < count; ++l) {
    ConceptSpec s;
    s.pattern = static_cast<int>(l);
    if (l < static_cast<Index>(groups)) {
      s.name = "group_ramp_" + std::to_string(l);
      s.group_correlation = static_cast<int>(l);
    } else {
      const auto extra_idx = static_cast<std::size_t>(l - groups);
      s.name = extra_idx < std::size(extras)
                   ? extras[extra_idx]
                   : "pattern_" + std::to_string(l);
      s.group_correlation = -1;
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

void generate_concept_bank(const GenConfig& cfg, Index concept_count,
                           Index images_per_side, double amplitude,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto specs = default_concept_specs(cfg.groups, concept_count);
  const std::uint64_t bank_seed = mix_seed(cfg.seed, kBankStream);

  ordered_json list = ordered_json::array();
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& spec = specs[l];
    const auto images = generate_concept_set(
        spec, images_per_side, cfg.height, cfg.width, amplitude,
        mix_seed(bank_seed, static_cast<std::uint64_t>(l)), cfg.groups);
    const std::string pos_dir = spec.name + "/pos";
    const std::string neg_dir = spec.name + "/neg";
    std::filesystem::create_directories(dir / pos_dir);
    std::filesystem::create_directories(dir / neg_dir);
    for (Index i = 0; i < images_per_side; ++i) {
      write_frames(dir / pos_dir / (zero_pad(i, 4) + ".bin"),
                   {images.pos[static_cast<std::size_t>(i)]});
      write_frames(dir / neg_dir / (zero_pad(i, 4) + ".bin"),
                   {images.neg[static_cast<std::size_t>(i)]});
    }
    ordered_json jc;
    jc["name"] = spec.name;
    jc["pattern"] = spec.pattern;
    jc["pos_dir"] = pos_dir;
    jc["neg_dir"] = neg_dir;
    list.push_back(jc);
  }
  std::ofstream out(dir / "concepts.json", std::ios::binary);
  if (!out) throw CorruptDataset("generate_concept_bank: cannot write concepts.json");
  out << list.dump(2) << "\n";
}

std::vector<ConceptBankEntry> load_concept_bank(const std::filesystem::path& dir,
                                                Index h, Index w) {
  std::ifstream in(dir / "concepts.json");
  if (!in) throw CorruptDataset("load_concept_bank: missing concepts.json in " +
                                dir.string());
  nlohmann::json list;
  in >> list;

  std::vector<ConceptBankEntry> bank;
  for (const auto& jc : list) {
    ConceptBankEntry e;
    e.spec.name = jc.at("name").get<std::string>();
    e.spec.pattern = jc.at("pattern").get<int>();
    for (const char* side : {"pos_dir", "neg_dir"}) {
      const auto side_dir = dir / jc.at(side).get<std::string>();
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(side_dir))
        if (entry.path().extension() == ".bin") files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      auto& dst = std::string(side) == "pos_dir" ? e.images.pos : e.images.neg;
      for (const auto& f : files) {
        auto frames = read_frames(f, 1, h, w);
        dst.push_back(std::move(frames.front()));
      }
    }
    bank.push_back(std::move(e));
  }
  return bank;
}

}  // namespace fairscope
