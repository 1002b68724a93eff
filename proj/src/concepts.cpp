#include "fairscope/concepts.hpp"

#include <algorithm>
#include <cmath>

#include "fairscope/errors.hpp"
#include "fairscope/numerics.hpp"

namespace fairscope {

namespace {

// Feature standardization inside the probe keeps gradient descent well
// conditioned and makes the fitted direction invariant to feature scaling.
struct ProbeScaler {
  VecX mean;
  VecX inv_sd;
};

ProbeScaler fit_scaler(const MatX& rows) {
  ProbeScaler s;
  s.mean = rows.colwise().mean();
  VecX var = (rows.rowwise() - s.mean.transpose()).colwise().squaredNorm() /
             static_cast<double>(rows.rows());
  s.inv_sd = VecX::Ones(rows.cols());
  for (Index i = 0; i < rows.cols(); ++i) {
    const double sd = std::sqrt(var(i));
    if (sd >= 1e-12) s.inv_sd(i) = 1.0 / sd;
  }
  return s;
}

MatX apply_scaler(const ProbeScaler& s, const MatX& rows) {
  return (rows.rowwise() - s.mean.transpose()) * s.inv_sd.asDiagonal();
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

ConceptVector fit_concept_vector(const std::string& name, const MatX& pos,
                                 const MatX& neg) {
  if (pos.rows() < 2 || neg.rows() < 2)
    throw InvalidInput("fit_concept_vector: need >= 2 samples per side");
  if (pos.cols() != neg.cols())
    throw InvalidInput("fit_concept_vector: feature dimension mismatch");
  const Index dim = pos.cols();

  // Trailing 20% of each side held out; both splits must stay nonempty.
  const Index pos_train = std::max<Index>(1, pos.rows() - pos.rows() / 5);
  const Index neg_train = std::max<Index>(1, neg.rows() - neg.rows() / 5);
  const bool have_holdout = pos_train < pos.rows() && neg_train < neg.rows();

  MatX x_train(pos_train + neg_train, dim);
  x_train.topRows(pos_train) = pos.topRows(pos_train);
  x_train.bottomRows(neg_train) = neg.topRows(neg_train);

  const ProbeScaler scaler = fit_scaler(x_train);
  const MatX xs = apply_scaler(scaler, x_train);
  VecX labels(xs.rows());
  labels.head(pos_train).setOnes();
  labels.tail(neg_train).setZero();

  const double lambda = 1e-3;
  VecX w = VecX::Zero(dim);
  double b = 0.0;
  double lr = 1.0;
  const double inv_n = 1.0 / static_cast<double>(xs.rows());

  auto loss_of = [&](const VecX& wv, double bv) {
    double acc = 0.0;
    for (Index i = 0; i < xs.rows(); ++i) {
      const double z = xs.row(i).dot(wv) + bv;
      // log(1 + exp(-y z)) with y in {-1, +1}, stably.
      const double yz = (labels(i) > 0.5 ? 1.0 : -1.0) * z;
      acc += yz > 0.0 ? std::log1p(std::exp(-yz)) : -yz + std::log1p(std::exp(yz));
    }
    return acc * inv_n + 0.5 * lambda * wv.squaredNorm();
  };

  double prev_loss = loss_of(w, b);
  for (int iter = 0; iter < 10000; ++iter) {
    VecX gw = lambda * w;
    double gb = 0.0;
    for (Index i = 0; i < xs.rows(); ++i) {
      const double p = sigmoid(xs.row(i).dot(w) + b);
      const double err = (p - labels(i)) * inv_n;
      gw += err * xs.row(i).transpose();
      gb += err;
    }
    if (gw.cwiseAbs().maxCoeff() < 1e-6 && std::abs(gb) < 1e-6) break;
    const VecX w_next = w - lr * gw;
    const double b_next = b - lr * gb;
    const double next_loss = loss_of(w_next, b_next);
    if (next_loss <= prev_loss) {
      w = w_next;
      b = b_next;
      prev_loss = next_loss;
      lr = std::min(lr * 1.05, 4.0);
    } else {
      lr *= 0.5;
      if (lr < 1e-12) break;
    }
  }

  // Back to the original feature scale; the direction is what matters.
  VecX v = w.cwiseProduct(scaler.inv_sd);
  const double norm = v.norm();
  ConceptVector out;
  out.name = name;
  out.v = norm >= 1e-300 ? VecX(v / norm) : VecX(VecX::Unit(dim, 0));

  auto accuracy_on = [&](const MatX& p_rows, const MatX& n_rows) {
    Index correct = 0, total = 0;
    for (Index i = 0; i < p_rows.rows(); ++i, ++total)
      if (apply_scaler(scaler, p_rows.row(i)).row(0).dot(w) + b >= 0.0) ++correct;
    for (Index i = 0; i < n_rows.rows(); ++i, ++total)
      if (apply_scaler(scaler, n_rows.row(i)).row(0).dot(w) + b < 0.0) ++correct;
    return static_cast<double>(correct) / static_cast<double>(total);
  };

  out.probe_accuracy =
      have_holdout
          ? accuracy_on(pos.bottomRows(pos.rows() - pos_train),
                        neg.bottomRows(neg.rows() - neg_train))
          : accuracy_on(pos, neg);
  out.low_quality = out.probe_accuracy < 0.6;
  return out;
}

MatX gradient_matrix(const MlpParams& p, std::span<const LabeledFrame> members) {
  if (members.empty()) throw InvalidInput("gradient_matrix: empty environment");
  MatX m = MatX::Zero(p.class_count(), p.feature_dim());
  const double inv_n = 1.0 / static_cast<double>(members.size());
  for (const auto& sample : members) {
    const ForwardTrace t = forward(p, sample.frame);
    VecX d = softmax(t.logits);
    d(sample.label) -= 1.0;
    m += inv_n * d * t.h.transpose();
  }
  return m;
}

std::vector<CssRecord> css(const std::vector<ConceptVector>& concepts,
                           const std::vector<MatX>& gradient_matrices) {
  if (gradient_matrices.empty())
    throw InvalidInput("css: need at least one gradient matrix");
  const Index classes = gradient_matrices.front().rows();

  std::vector<CssRecord> records;
  records.reserve(concepts.size());
  for (const auto& cv : concepts) {
    MatX proj(static_cast<Index>(gradient_matrices.size()), classes);
    for (std::size_t k = 0; k < gradient_matrices.size(); ++k)
      proj.row(static_cast<Index>(k)) =
          cv.v.transpose() * gradient_matrices[k].transpose();

    const RowVecX sums = proj.colwise().sum();
    Index assoc = 0;
    for (Index y = 1; y < classes; ++y)
      if (sums(y) > sums(assoc)) assoc = y;  // ties keep the lower class

    std::vector<double> vals(static_cast<std::size_t>(proj.rows()));
    for (Index k = 0; k < proj.rows(); ++k)
      vals[static_cast<std::size_t>(k)] = proj(k, assoc);

    CssRecord rec;
    rec.name = cv.name;
    rec.assoc_class = static_cast<int>(assoc);
    rec.score = population_variance(vals);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<bool> concept_presence(const MatX& member_features,
                                   const VecX& global_mean_feature,
                                   const std::vector<ConceptVector>& concepts) {
  if (member_features.rows() == 0)
    throw InvalidInput("concept_presence: empty cluster");
  const VecX cluster_mean = member_features.colwise().mean();
  std::vector<bool> present(concepts.size(), false);
  for (std::size_t l = 0; l < concepts.size(); ++l)
    present[l] = cluster_mean.dot(concepts[l].v) >
                 global_mean_feature.dot(concepts[l].v);
  return present;
}

SamplingWeights sampling_weights(
    const std::vector<std::vector<Index>>& cluster_sizes,
    const std::vector<CssRecord>& css_records,
    const std::vector<std::vector<std::vector<bool>>>& presence) {
  const std::size_t classes = cluster_sizes.size();
  SamplingWeights out;
  out.size_weight.resize(classes);
  out.bias_score.resize(classes);
  out.weight.resize(classes);
  out.prob.resize(classes);
  out.size_prob.resize(classes);

  double r_total = 0.0;
  for (std::size_t y = 0; y < classes; ++y) {
    const std::size_t k_count = cluster_sizes[y].size();
    out.size_weight[y].assign(k_count, 0.0);
    for (std::size_t k = 0; k < k_count; ++k)
      if (cluster_sizes[y][k] > 0) {
        out.size_weight[y][k] = 1.0 / static_cast<double>(cluster_sizes[y][k]);
        r_total += out.size_weight[y][k];
      }
  }

  for (std::size_t y = 0; y < classes; ++y) {
    const std::size_t k_count = cluster_sizes[y].size();
    out.bias_score[y].assign(k_count, 0.0);
    out.weight[y].assign(k_count, 0.0);
    out.prob[y].assign(k_count, 0.0);
    out.size_prob[y].assign(k_count, 0.0);

    // L_y: concepts present in at least one cluster of class y.
    std::vector<bool> in_class(css_records.size(), false);
    if (y < presence.size())
      for (const auto& cluster_set : presence[y])
        for (std::size_t l = 0; l < cluster_set.size() && l < in_class.size(); ++l)
          if (cluster_set[l]) in_class[l] = true;

    double denom = 0.0;
    for (std::size_t l = 0; l < css_records.size(); ++l)
      if (in_class[l]) denom += css_records[l].masked(static_cast<int>(y));

    for (std::size_t k = 0; k < k_count; ++k) {
      if (cluster_sizes[y][k] <= 0) continue;  // excluded with weight 0
      double miss_all = 1.0;
      if (denom > 0.0 && y < presence.size() && k < presence[y].size()) {
        for (std::size_t l = 0; l < css_records.size(); ++l) {
          if (l >= presence[y][k].size() || !presence[y][k][l]) continue;
          const double p_concept =
              css_records[l].masked(static_cast<int>(y)) / denom;
          miss_all *= 1.0 - p_concept;
        }
      }
      out.bias_score[y][k] = denom > 0.0 ? 1.0 - miss_all : 0.0;
      out.weight[y][k] = out.bias_score[y][k] * out.size_weight[y][k];
      if (r_total > 0.0)
        out.size_prob[y][k] = out.size_weight[y][k] / r_total;
    }

    double w_sum = 0.0;
    for (double w : out.weight[y]) w_sum += w;
    if (w_sum > 0.0) {
      for (std::size_t k = 0; k < k_count; ++k)
        out.prob[y][k] = out.weight[y][k] / w_sum;
    } else {
      // Uniform fallback over nonempty clusters.
      Index nonempty = 0;
      for (std::size_t k = 0; k < k_count; ++k)
        if (cluster_sizes[y][k] > 0) ++nonempty;
      if (nonempty > 0)
        for (std::size_t k = 0; k < k_count; ++k)
          if (cluster_sizes[y][k] > 0)
            out.prob[y][k] = 1.0 / static_cast<double>(nonempty);
    }
  }
  return out;
}

Index sample_partner(Index self, int y, const SamplingWeights& weights,
                     const std::vector<std::vector<std::vector<Index>>>& members,
                     Rng& rng, bool size_only) {
  const auto& cls_members = members[static_cast<std::size_t>(y)];
  std::vector<double> probs;
  if (size_only) {
    double total = 0.0;
    for (double r : weights.size_weight[static_cast<std::size_t>(y)]) total += r;
    if (total <= 0.0) throw InvalidInput("sample_partner: class has no members");
    for (double r : weights.size_weight[static_cast<std::size_t>(y)])
      probs.push_back(r / total);
  } else {
    probs = weights.prob[static_cast<std::size_t>(y)];
  }

  const double draw = rng.uniform01();
  double acc = 0.0;
  std::size_t cluster = probs.size() - 1;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (draw < acc) {
      cluster = k;
      break;
    }
  }
  // Guard against an empty pick under degenerate weights.
  if (cls_members[cluster].empty()) {
    for (std::size_t k = 0; k < cls_members.size(); ++k)
      if (!cls_members[k].empty()) {
        cluster = k;
        break;
      }
  }
  const auto& pool = cls_members[cluster];
  if (pool.empty()) throw InvalidInput("sample_partner: class has no members");

  Index pick = pool[static_cast<std::size_t>(rng.below(pool.size()))];
  if (pool.size() >= 2) {
    for (int guard = 0; pick == self && guard < 64; ++guard)
      pick = pool[static_cast<std::size_t>(rng.below(pool.size()))];
    if (pick == self)
      for (Index candidate : pool)
        if (candidate != self) {
          pick = candidate;
          break;
        }
  }
  return pick;
}

}  // namespace fairscope
