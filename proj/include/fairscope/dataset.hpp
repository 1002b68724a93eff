#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairscope/augment.hpp"
#include "fairscope/types.hpp"

namespace fairscope {

struct VideoSample {
  std::string id;
  std::vector<Tensor2D> frames;
  int label = 0;   // 0 real, 1 fake
  int group = -1;  // -1 when the loading interface hides it (train/val)
  std::uint64_t seed = 0;
};

struct ManifestVideo {
  std::string id;
  int label = 0;
  int group = 0;
  Index frames = 0;
  std::string file;
};

struct DatasetManifest {
  int version = 1;
  Index height = 0;
  Index width = 0;
  std::string split;  // train | val | test
  std::vector<ManifestVideo> videos;
};

// Planted grating band, in min-frequency units per axis: a fake video's
// grating coordinates (u0, v0) satisfy min(u0, H-u0) and min(v0, W-v0) in
// [lo, hi]. Must lie strictly outside the default low-frequency mask so the
// proposed augmentation cannot erase the artifact.
struct ArtifactBand {
  Index lo = 14;
  Index hi = 16;
};

struct GenConfig {
  Index height = 32;
  Index width = 32;
  Index train_videos = 400;
  Index val_videos = 100;
  Index test_videos = 200;
  Index frames_per_video = 8;
  int groups = 2;                     // up to 8
  double fake_fraction = 0.5;
  double bias_strength = 0.8;         // fraction of fake videos from group 0
  double artifact_amplitude = 0.20;   // calibrated against the default model
  ArtifactBand artifact_band;
  double temporal_jitter = 2.5;       // fake grating phase jitter, radians
  double signature_amplitude = 0.30;  // per-group brightness-gradient strength
  double drift_amplitude = 0.35;      // smooth blob motion, pixels per frame
  double noise_amplitude = 0.02;
  std::uint64_t seed = 42;
};

// Throws ConfigError on invalid settings, including an artifact band that
// overlaps the default (alpha = 3/4, centered) low-frequency mask.
void validate(const GenConfig& cfg);

// Raw headerless frame files: frames concatenated, each frame H*W IEEE-754
// 32-bit little-endian values, row-major. Shape lives in the manifest.
void write_frames(const std::filesystem::path& path,
                  const std::vector<Tensor2D>& frames);
std::vector<Tensor2D> read_frames(const std::filesystem::path& path,
                                  Index expected, Index h, Index w);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Generates one split (frame files plus manifest <split>.json) under dir.
DatasetManifest generate_split(const GenConfig& cfg, const std::string& split,
                               const std::filesystem::path& dir);

// Full dataset: train/val/test splits.
void generate_dataset(const GenConfig& cfg, const std::filesystem::path& dir);

struct LoadedDataset {
  Index height = 0;
  Index width = 0;
  std::string split;
  std::vector<VideoSample> videos;
};

// Loads a split. The group attribute is surfaced only for the test split;
// train and val samples always carry group = -1, so no training code path can
// read it.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

struct ConceptSpec {
  std::string name;
  int pattern = 0;            // synthetic pattern family id
  int group_correlation = -1;  // group whose signature this concept mirrors
};

struct ConceptImages {
  std::vector<Tensor2D> pos;
  std::vector<Tensor2D> neg;
};

// Positives are the concept pattern superimposed on random backgrounds;
// negatives are the matched backgrounds without the pattern. `groups` is the
// dataset's group count: pattern ids below it render the matching per-group
// gradient signature, the rest are unrelated smooth families.
ConceptImages generate_concept_set(const ConceptSpec& spec, Index count,
                                   Index h, Index w, double amplitude,
                                   std::uint64_t seed, int groups = 2);

// Default bank: the first min(groups, count) concepts mirror the per-group
// gradient signatures; the rest are unrelated smooth patterns.
std::vector<ConceptSpec> default_concept_specs(int groups, Index count);

// Writes concepts.json plus per-image frame-format files under dir.
void generate_concept_bank(const GenConfig& cfg, Index concept_count,
                           Index images_per_side, double amplitude,
                           const std::filesystem::path& dir);

struct ConceptBankEntry {
  ConceptSpec spec;
  ConceptImages images;
};
std::vector<ConceptBankEntry> load_concept_bank(const std::filesystem::path& dir,
                                                Index h, Index w);

}  // namespace fairscope
