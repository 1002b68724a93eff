#pragma once

#include <array>
#include <vector>

#include "fairscope/rng.hpp"
#include "fairscope/types.hpp"

namespace fairscope {

// d[0] = 0 (no preceding frame); d[t] = 1 - cos(h[t-1], h[t]) for t >= 1.
// Values lie in [0, 2].
std::vector<double> temporal_difference(const std::vector<VecX>& sequence);

// NC: reduced features alone. PC: reduced features with the temporal
// difference appended.
enum class ClusterInput { naive, temporal };

// Builds one clustering vector per frame from per-video frame sequences of
// reduced features. Output order: videos in input order, frames in time order.
std::vector<VecX> build_cluster_inputs(
    const std::vector<std::vector<VecX>>& videos, ClusterInput mode);

// Per-coordinate zero-mean unit-variance scaling fitted on the train split.
struct Standardizer {
  VecX mean;
  VecX scale;  // 1/stddev, 1.0 where stddev < 1e-12

  static Standardizer fit(const std::vector<VecX>& points);
  VecX apply(const VecX& p) const;
};

enum class ClusterAlgo { kmeans, diag_em };

struct ClusterFit {
  MatX centroids;                       // K x dim
  std::vector<Index> assignment;        // per input point
  std::vector<double> objective_trace;  // k-means objective per iteration
};

// k-means with k-means++ seeding, Euclidean distance, at most 100 iterations
// or relative objective change < 1e-6. Empty clusters are repaired by
// reassigning the farthest point of the largest cluster. Deterministic given
// the rng. Throws InvalidInput when the sample count is below k.
ClusterFit fit_kmeans(const std::vector<VecX>& points, Index k, Rng& rng);

// Diagonal-covariance EM refinement of a k-means fit; hard assignments.
ClusterFit fit_diag_em(const std::vector<VecX>& points, Index k, Rng& rng);

ClusterFit fit_clusters(const std::vector<VecX>& points, Index k, Rng& rng,
                        ClusterAlgo algo = ClusterAlgo::kmeans);

// Frame assignments per class, plus bookkeeping to find members.
struct ClusterModel {
  Index k = 0;
  // fits[y]: clustering of class-y frames; point order matches frame_ids[y].
  std::array<ClusterFit, 2> fits;
  std::array<std::vector<Index>, 2> frame_ids;  // global frame ids per class

  // members[y][cluster] -> global frame ids.
  std::array<std::vector<std::vector<Index>>, 2> members() const;
};

// One environment: class-0 cluster `cluster0` merged with class-1 cluster
// `cluster1`.
struct Environment {
  Index index = 0;
  Index cluster0 = 0;
  Index cluster1 = 0;
};

// Uniformly random bijection between class-0 and class-1 clusters; re-drawn
// per training batch by advancing the rng.
std::vector<Environment> form_environments(Index k, Rng& rng);

}  // namespace fairscope
