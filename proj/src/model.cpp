#include "fairscope/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fairscope/errors.hpp"

namespace fairscope {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954u;   // parameter init
constexpr std::uint64_t kShuffleStream = 0x53485546u;  // epoch shuffles

VecX flatten(const Tensor2D& frame) {
  VecX x(frame.size());
  Index i = 0;
  for (Index r = 0; r < frame.rows(); ++r)
    for (Index c = 0; c < frame.cols(); ++c) x(i++) = frame(r, c);
  return x;
}

void fill_uniform(MatX& m, double s, Rng& rng) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-s, s);
}

void fill_uniform(VecX& v, double s, Rng& rng) {
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-s, s);
}

}  // namespace

MlpParams zero_params(Index input_dim, Index hidden, Index feature_dim,
                      Index classes) {
  MlpParams p;
  p.w1 = MatX::Zero(hidden, input_dim);
  p.b1 = VecX::Zero(hidden);
  p.w2 = MatX::Zero(feature_dim, hidden);
  p.b2 = VecX::Zero(feature_dim);
  p.w3 = MatX::Zero(classes, feature_dim);
  p.b3 = VecX::Zero(classes);
  return p;
}

MlpParams init_params(Index input_dim, const TrainConfig& cfg) {
  MlpParams p = zero_params(input_dim, cfg.hidden, cfg.feature_dim);
  Rng rng(mix_seed(cfg.seed, kInitStream));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  const double s3 = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
  fill_uniform(p.w1, s1, rng);
  fill_uniform(p.b1, s1, rng);
  fill_uniform(p.w2, s2, rng);
  fill_uniform(p.b2, s2, rng);
  fill_uniform(p.w3, s3, rng);
  fill_uniform(p.b3, s3, rng);
  return p;
}

ForwardTrace forward(const MlpParams& p, const Tensor2D& frame) {
  if (frame.size() != p.input_dim())
    throw InvalidInput("forward: frame extent does not match the model");
  ForwardTrace t;
  t.input = flatten(frame);
  t.a1pre = p.w1 * t.input + p.b1;
  t.a1 = t.a1pre.cwiseMax(0.0);
  t.h = p.w2 * t.a1 + p.b2;
  t.logits = p.w3 * t.h + p.b3;
  return t;
}

VecX feature_extract(const MlpParams& p, const Tensor2D& frame) {
  return forward(p, frame).h;
}

VecX softmax(const VecX& logits) {
  const VecX shifted = logits.array() - logits.maxCoeff();
  VecX e = shifted.array().exp();
  return e / e.sum();
}

double fake_score(const MlpParams& p, const Tensor2D& frame) {
  return softmax(forward(p, frame).logits)(1);
}

LossGrads loss_and_grads(const MlpParams& p, std::span<const LabeledFrame> batch) {
  if (batch.empty()) throw InvalidInput("loss_and_grads: empty batch");
  LossGrads out;
  out.grads = zero_params(p.input_dim(), p.hidden_dim(), p.feature_dim(),
                          p.class_count());
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (const auto& sample : batch) {
    const ForwardTrace t = forward(p, sample.frame);
    const VecX prob = softmax(t.logits);
    const double pl = std::max(prob(sample.label), 1e-300);
    out.loss += -std::log(pl) * inv_n;

    VecX dlogits = prob * inv_n;
    dlogits(sample.label) -= inv_n;

    out.grads.w3 += dlogits * t.h.transpose();
    out.grads.b3 += dlogits;
    const VecX dh = p.w3.transpose() * dlogits;
    out.grads.w2 += dh * t.a1.transpose();
    out.grads.b2 += dh;
    VecX da1 = p.w2.transpose() * dh;
    for (Index i = 0; i < da1.size(); ++i)
      if (t.a1pre(i) <= 0.0) da1(i) = 0.0;
    out.grads.w1 += da1 * t.input.transpose();
    out.grads.b1 += da1;
  }
  if (!std::isfinite(out.loss))
    throw TrainingDiverged("loss_and_grads: non-finite loss");
  return out;
}

AdamState make_adam_state(const MlpParams& like) {
  AdamState s;
  s.m = zero_params(like.input_dim(), like.hidden_dim(), like.feature_dim(),
                    like.class_count());
  s.v = zero_params(like.input_dim(), like.hidden_dim(), like.feature_dim(),
                    like.class_count());
  return s;
}

void adam_step(MlpParams& p, const MlpParams& grads, AdamState& s, double lr) {
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = (s.beta2 * v.array() + (1.0 - s.beta2) * grad.array().square()).matrix();
    const auto m_hat = m.array() / bc1;
    const auto v_hat = v.array() / bc2;
    param.array() -= lr * m_hat / (v_hat.sqrt() + s.epsilon);
  };
  update(p.w1, grads.w1, s.m.w1, s.v.w1);
  update(p.b1, grads.b1, s.m.b1, s.v.b1);
  update(p.w2, grads.w2, s.m.w2, s.v.w2);
  update(p.b2, grads.b2, s.m.b2, s.v.b2);
  update(p.w3, grads.w3, s.m.w3, s.v.w3);
  update(p.b3, grads.b3, s.m.b3, s.v.b3);
}

TrainResult train(const std::vector<LabeledFrame>& data, const TrainConfig& cfg,
                  const AugmentHook& hook, const MlpParams* warm_start,
                  const EpochCallback& on_epoch) {
  if (data.empty()) throw InvalidInput("train: empty training set");
  const Index input_dim = data.front().frame.size();

  TrainResult result;
  result.params = warm_start ? *warm_start : init_params(input_dim, cfg);
  AdamState adam = make_adam_state(result.params);
  Rng shuffle_rng(mix_seed(cfg.seed, kShuffleStream));

  std::vector<Index> order(data.size());
  std::iota(order.begin(), order.end(), Index{0});

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    Index counted = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const Index> ids(order.data() + start, end - start);

      std::vector<LabeledFrame> batch;
      if (hook) {
        batch = hook(ids, result.params);
      } else {
        batch.reserve(ids.size());
        for (Index id : ids) batch.push_back(data[static_cast<std::size_t>(id)]);
      }
      const LossGrads lg = loss_and_grads(result.params, batch);
      adam_step(result.params, lg.grads, adam, cfg.learning_rate);
      epoch_loss += lg.loss * static_cast<double>(batch.size());
      counted += static_cast<Index>(batch.size());
    }
    const double mean_loss = epoch_loss / static_cast<double>(counted);
    result.epoch_loss.push_back(mean_loss);
    if (on_epoch && on_epoch(epoch, mean_loss, result.params)) break;
  }
  return result;
}

Tensor2D saliency_gradient(const MlpParams& p, const Tensor2D& frame) {
  const ForwardTrace t = forward(p, frame);
  VecX dlogits = VecX::Zero(p.class_count());
  dlogits(1) = 1.0;
  dlogits(0) = -1.0;
  const VecX dh = p.w3.transpose() * dlogits;
  VecX da1 = p.w2.transpose() * dh;
  for (Index i = 0; i < da1.size(); ++i)
    if (t.a1pre(i) <= 0.0) da1(i) = 0.0;
  const VecX dx = p.w1.transpose() * da1;
  Tensor2D grad(frame.rows(), frame.cols());
  Index i = 0;
  for (Index r = 0; r < frame.rows(); ++r)
    for (Index c = 0; c < frame.cols(); ++c) grad(r, c) = dx(i++);
  return grad;
}

Tensor2D saliency_map(const MlpParams& p, const Tensor2D& frame) {
  Tensor2D m = saliency_gradient(p, frame).cwiseAbs();
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi - lo <= 0.0) return Tensor2D::Zero(frame.rows(), frame.cols());
  return (m.array() - lo) / (hi - lo);
}

namespace {

void write_block_f64(std::ofstream& out, const MatX& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

void write_block_f64(std::ofstream& out, const VecX& v) {
  for (Index i = 0; i < v.size(); ++i) {
    const double x = v(i);
    out.write(reinterpret_cast<const char*>(&x), sizeof(double));
  }
}

void read_block_f64(std::ifstream& in, MatX& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      m(r, c) = v;
    }
}

void read_block_f64(std::ifstream& in, VecX& v) {
  for (Index i = 0; i < v.size(); ++i) {
    double x;
    in.read(reinterpret_cast<char*>(&x), sizeof(double));
    v(i) = x;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpParams& p,
                     const CheckpointMeta& meta) {
  nlohmann::ordered_json header;
  header["format"] = 1;
  header["height"] = meta.height;
  header["width"] = meta.width;
  header["hidden"] = p.hidden_dim();
  header["feature_dim"] = p.feature_dim();
  header["classes"] = p.class_count();
  header["seed"] = meta.seed;
  header["epoch"] = meta.epoch;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("save_checkpoint: cannot open " + path.string());
  out << header.dump() << "\n";
  write_block_f64(out, p.w1);
  write_block_f64(out, p.b1);
  write_block_f64(out, p.w2);
  write_block_f64(out, p.b2);
  write_block_f64(out, p.w3);
  write_block_f64(out, p.b3);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("load_checkpoint: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw CorruptDataset("load_checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptDataset(std::string("load_checkpoint: bad header: ") + e.what());
  }

  Checkpoint ck;
  ck.meta.height = header.at("height").get<Index>();
  ck.meta.width = header.at("width").get<Index>();
  ck.meta.seed = header.at("seed").get<std::uint64_t>();
  ck.meta.epoch = header.at("epoch").get<Index>();
  const Index hidden = header.at("hidden").get<Index>();
  const Index feature = header.at("feature_dim").get<Index>();
  const Index classes = header.at("classes").get<Index>();
  ck.params = zero_params(ck.meta.height * ck.meta.width, hidden, feature, classes);
  read_block_f64(in, ck.params.w1);
  read_block_f64(in, ck.params.b1);
  read_block_f64(in, ck.params.w2);
  read_block_f64(in, ck.params.b2);
  read_block_f64(in, ck.params.w3);
  read_block_f64(in, ck.params.b3);
  if (!in) throw CorruptDataset("load_checkpoint: truncated parameter blocks");
  return ck;
}

}  // namespace fairscope
