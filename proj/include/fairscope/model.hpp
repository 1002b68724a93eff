#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fairscope/rng.hpp"
#include "fairscope/types.hpp"

namespace fairscope {

// flatten -> affine -> ReLU -> affine (feature h) -> affine (logits).
// Softmax is applied only inside the loss.
struct MlpParams {
  MatX w1;  // hidden x (H*W)
  VecX b1;
  MatX w2;  // D x hidden (feature layer)
  VecX b2;
  MatX w3;  // C x D (head)
  VecX b3;

  Index input_dim() const { return w1.cols(); }
  Index hidden_dim() const { return w1.rows(); }
  Index feature_dim() const { return w2.rows(); }
  Index class_count() const { return w3.rows(); }
};

struct ForwardTrace {
  VecX input;
  VecX a1pre;
  VecX a1;
  VecX h;       // penultimate feature layer
  VecX logits;
};

struct TrainConfig {
  Index batch_size = 64;
  Index epochs = 10;
  double learning_rate = 2e-4;
  Index hidden = 64;
  Index feature_dim = 32;
  std::uint64_t seed = 0;
};

struct AdamState {
  Index step = 0;
  MlpParams m;
  MlpParams v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct LabeledFrame {
  Tensor2D frame;
  int label = 0;
};

MlpParams zero_params(Index input_dim, Index hidden, Index feature_dim,
                      Index classes = 2);

// uniform(-s, s) with s = 1/sqrt(fan-in), weights and biases, seeded.
MlpParams init_params(Index input_dim, const TrainConfig& cfg);

ForwardTrace forward(const MlpParams& p, const Tensor2D& frame);
VecX feature_extract(const MlpParams& p, const Tensor2D& frame);
VecX softmax(const VecX& logits);
double fake_score(const MlpParams& p, const Tensor2D& frame);

struct LossGrads {
  double loss = 0.0;
  MlpParams grads;
};

// Mean softmax cross-entropy over the batch with exact backpropagation;
// accumulation in sample-index order. Throws TrainingDiverged when the loss
// is non-finite.
LossGrads loss_and_grads(const MlpParams& p, std::span<const LabeledFrame> batch);

AdamState make_adam_state(const MlpParams& like);
void adam_step(MlpParams& p, const MlpParams& grads, AdamState& s, double lr);

// Transforms a mini-batch before the parameter update. `ids` index into the
// training frame table; `current` is the evolving parameter state.
using AugmentHook = std::function<std::vector<LabeledFrame>(
    std::span<const Index> ids, const MlpParams& current)>;

struct TrainResult {
  MlpParams params;
  std::vector<double> epoch_loss;
};

// Called after each epoch; returning true stops training early.
using EpochCallback =
    std::function<bool(Index epoch, double epoch_loss, const MlpParams& params)>;

// Seeded shuffled mini-batches; identity hook (nullptr) = vanilla training.
// Starts from `warm_start` when given, otherwise from seeded initialization.
TrainResult train(const std::vector<LabeledFrame>& data, const TrainConfig& cfg,
                  const AugmentHook& hook = nullptr,
                  const MlpParams* warm_start = nullptr,
                  const EpochCallback& on_epoch = nullptr);

// |d(logit_fake - logit_real)/d pixel|, min-max normalized to [0,1].
// A zero gradient range normalizes to all zeros.
Tensor2D saliency_map(const MlpParams& p, const Tensor2D& frame);
// Pre-normalization signed gradient, for verification against finite
// differences.
Tensor2D saliency_gradient(const MlpParams& p, const Tensor2D& frame);

struct CheckpointMeta {
  Index height = 0;
  Index width = 0;
  std::uint64_t seed = 0;
  Index epoch = 0;
};

// JSON header line (dims, seed, epoch) + raw little-endian 64-bit parameter
// blocks, row-major, in declared order: w1, b1, w2, b2, w3, b3.
void save_checkpoint(const std::filesystem::path& path, const MlpParams& p,
                     const CheckpointMeta& meta);

struct Checkpoint {
  MlpParams params;
  CheckpointMeta meta;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fairscope
