#include "fairscope/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fairscope/errors.hpp"
#include "fairscope/numerics.hpp"

namespace fairscope {

std::vector<double> temporal_difference(const std::vector<VecX>& sequence) {
  if (sequence.empty()) return {};
  std::vector<double> d(sequence.size(), 0.0);
  for (std::size_t t = 1; t < sequence.size(); ++t)
    d[t] = 1.0 - cosine_similarity(sequence[t - 1], sequence[t]);
  return d;
}

std::vector<VecX> build_cluster_inputs(
    const std::vector<std::vector<VecX>>& videos, ClusterInput mode) {
  std::vector<VecX> out;
  for (const auto& seq : videos) {
    const auto diffs = temporal_difference(seq);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (mode == ClusterInput::naive) {
        out.push_back(seq[t]);
      } else {
        VecX z(seq[t].size() + 1);
        z.head(seq[t].size()) = seq[t];
        z(seq[t].size()) = diffs[t];
        out.push_back(std::move(z));
      }
    }
  }
  return out;
}

Standardizer Standardizer::fit(const std::vector<VecX>& points) {
  if (points.empty()) throw InvalidInput("Standardizer: no points");
  const Index dim = points.front().size();
  Standardizer s;
  s.mean = VecX::Zero(dim);
  for (const auto& p : points) s.mean += p;
  s.mean /= static_cast<double>(points.size());
  VecX var = VecX::Zero(dim);
  for (const auto& p : points) var += (p - s.mean).cwiseAbs2();
  var /= static_cast<double>(points.size());
  s.scale = VecX::Ones(dim);
  for (Index i = 0; i < dim; ++i) {
    const double sd = std::sqrt(var(i));
    if (sd >= 1e-12) s.scale(i) = 1.0 / sd;
  }
  return s;
}

VecX Standardizer::apply(const VecX& p) const {
  return (p - mean).cwiseProduct(scale);
}

namespace {

double sq_dist(const VecX& a, const VecX& b) { return (a - b).squaredNorm(); }

MatX kmeanspp_seed(const std::vector<VecX>& points, Index k, Rng& rng) {
  const Index n = static_cast<Index>(points.size());
  const Index dim = points.front().size();
  MatX centroids(k, dim);
  const Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  centroids.row(0) = points[static_cast<std::size_t>(first)].transpose();

  std::vector<double> d2(static_cast<std::size_t>(n),
                         std::numeric_limits<double>::infinity());
  for (Index j = 1; j < k; ++j) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double d = sq_dist(points[static_cast<std::size_t>(i)],
                               centroids.row(j - 1).transpose());
      auto& slot = d2[static_cast<std::size_t>(i)];
      slot = std::min(slot, d);
      total += slot;
    }
    Index pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(j) = points[static_cast<std::size_t>(pick)].transpose();
  }
  return centroids;
}

// Nearest centroid, ties to the lower index.
Index nearest(const VecX& p, const MatX& centroids) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < centroids.rows(); ++j) {
    const double d = (p - centroids.row(j).transpose()).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace

ClusterFit fit_kmeans(const std::vector<VecX>& points, Index k, Rng& rng) {
  const Index n = static_cast<Index>(points.size());
  if (k < 1) throw InvalidInput("fit_kmeans: k must be positive");
  if (n < k) throw InvalidInput("fit_kmeans: fewer samples than clusters");
  const Index dim = points.front().size();

  ClusterFit fit;
  fit.centroids = kmeanspp_seed(points, k, rng);
  fit.assignment.assign(static_cast<std::size_t>(n), 0);

  double prev_obj = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    double obj = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Index j = nearest(points[static_cast<std::size_t>(i)], fit.centroids);
      fit.assignment[static_cast<std::size_t>(i)] = j;
      obj += sq_dist(points[static_cast<std::size_t>(i)],
                     fit.centroids.row(j).transpose());
    }
    fit.objective_trace.push_back(obj);

    MatX sums = MatX::Zero(k, dim);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const Index j = fit.assignment[static_cast<std::size_t>(i)];
      sums.row(j) += points[static_cast<std::size_t>(i)].transpose();
      ++counts[static_cast<std::size_t>(j)];
    }

    // Repair empty clusters: move the farthest point of the largest cluster.
    for (Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      Index largest = 0;
      for (Index l = 1; l < k; ++l)
        if (counts[static_cast<std::size_t>(l)] > counts[static_cast<std::size_t>(largest)])
          largest = l;
      Index far_i = -1;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        if (fit.assignment[static_cast<std::size_t>(i)] != largest) continue;
        const double d = sq_dist(points[static_cast<std::size_t>(i)],
                                 fit.centroids.row(largest).transpose());
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      if (far_i < 0) continue;
      sums.row(largest) -= points[static_cast<std::size_t>(far_i)].transpose();
      counts[static_cast<std::size_t>(largest)] -= 1;
      sums.row(j) += points[static_cast<std::size_t>(far_i)].transpose();
      counts[static_cast<std::size_t>(j)] += 1;
      fit.assignment[static_cast<std::size_t>(far_i)] = j;
    }

    for (Index j = 0; j < k; ++j)
      if (counts[static_cast<std::size_t>(j)] > 0)
        fit.centroids.row(j) =
            sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);

    if (prev_obj < std::numeric_limits<double>::infinity()) {
      const double rel = std::abs(prev_obj - obj) / std::max(prev_obj, 1e-30);
      if (rel < 1e-6) break;
    }
    prev_obj = obj;
  }
  return fit;
}

ClusterFit fit_diag_em(const std::vector<VecX>& points, Index k, Rng& rng) {
  // Initialize from k-means, then run EM with diagonal covariances.
  ClusterFit fit = fit_kmeans(points, k, rng);
  const Index n = static_cast<Index>(points.size());
  const Index dim = points.front().size();

  MatX means = fit.centroids;
  MatX vars = MatX::Ones(k, dim);
  VecX weights = VecX::Constant(k, 1.0 / static_cast<double>(k));
  MatX resp(n, k);

  for (int iter = 0; iter < 100; ++iter) {
    // E-step in log space.
    for (Index i = 0; i < n; ++i) {
      VecX logp(k);
      for (Index j = 0; j < k; ++j) {
        double acc = std::log(std::max(weights(j), 1e-300));
        for (Index d = 0; d < dim; ++d) {
          const double v = std::max(vars(j, d), 1e-8);
          const double diff = points[static_cast<std::size_t>(i)](d) - means(j, d);
          acc += -0.5 * (std::log(2.0 * std::numbers::pi * v) + diff * diff / v);
        }
        logp(j) = acc;
      }
      const double m = logp.maxCoeff();
      VecX e = (logp.array() - m).exp();
      resp.row(i) = (e / e.sum()).transpose();
    }
    // M-step.
    for (Index j = 0; j < k; ++j) {
      const double nj = resp.col(j).sum();
      if (nj < 1e-12) continue;
      VecX mu = VecX::Zero(dim);
      for (Index i = 0; i < n; ++i)
        mu += resp(i, j) * points[static_cast<std::size_t>(i)];
      mu /= nj;
      VecX var = VecX::Zero(dim);
      for (Index i = 0; i < n; ++i)
        var += resp(i, j) * (points[static_cast<std::size_t>(i)] - mu).cwiseAbs2();
      var /= nj;
      means.row(j) = mu.transpose();
      vars.row(j) = var.transpose().cwiseMax(1e-8);
      weights(j) = nj / static_cast<double>(n);
    }
  }

  fit.centroids = means;
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    resp.row(i).maxCoeff(&best);
    fit.assignment[static_cast<std::size_t>(i)] = best;
  }
  return fit;
}

ClusterFit fit_clusters(const std::vector<VecX>& points, Index k, Rng& rng,
                        ClusterAlgo algo) {
  return algo == ClusterAlgo::kmeans ? fit_kmeans(points, k, rng)
                                     : fit_diag_em(points, k, rng);
}

std::array<std::vector<std::vector<Index>>, 2> ClusterModel::members() const {
  std::array<std::vector<std::vector<Index>>, 2> out;
  for (int y = 0; y < 2; ++y) {
    out[y].assign(static_cast<std::size_t>(k), {});
    const auto& fit = fits[static_cast<std::size_t>(y)];
    const auto& ids = frame_ids[static_cast<std::size_t>(y)];
    for (std::size_t i = 0; i < ids.size(); ++i)
      out[y][static_cast<std::size_t>(fit.assignment[i])].push_back(ids[i]);
  }
  return out;
}

std::vector<Environment> form_environments(Index k, Rng& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.shuffle(perm);
  std::vector<Environment> envs;
  envs.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i)
    envs.push_back({i, i, perm[static_cast<std::size_t>(i)]});
  return envs;
}

}  // namespace fairscope
