#pragma once

#include <span>
#include <string>
#include <vector>

#include "fairscope/model.hpp"
#include "fairscope/rng.hpp"
#include "fairscope/types.hpp"

namespace fairscope {

struct ConceptVector {
  std::string name;
  VecX v;                       // unit normal, oriented toward positives
  double probe_accuracy = 0.0;  // held-out accuracy of the linear probe
  bool low_quality = false;     // probe accuracy below 0.6
};

// Regularized logistic probe (L2 penalty 1e-3, full-batch gradient descent to
// tolerance 1e-6) separating positive from negative feature rows; v is the
// unit normal of the decision boundary. Accuracy is measured on the trailing
// 20% of each side (on everything when a side is too small to split).
ConceptVector fit_concept_vector(const std::string& name, const MatX& pos,
                                 const MatX& neg);

// Gradient of the mean cross-entropy over the members with respect to the
// head weights: M = mean over members of (softmax(logits) - onehot(y)) h^T,
// shape C x D. Throws InvalidInput when members is empty.
MatX gradient_matrix(const MlpParams& p, std::span<const LabeledFrame> members);

struct CssRecord {
  std::string name;
  double score = 0.0;   // S_l >= 0
  int assoc_class = 0;  // y'_l

  double masked(int y) const { return y == assoc_class ? score : 0.0; }
};

// For each concept: projections p_k = v . M_k^T (one C-vector per
// environment); y' = argmax_y sum_k p_k[y] (ties to the lower class);
// S = population variance of {p_k[y']}.
std::vector<CssRecord> css(const std::vector<ConceptVector>& concepts,
                           const std::vector<MatX>& gradient_matrices);

// Concept l is present in a cluster iff the cluster-mean projection <h, v_l>
// strictly exceeds the train-split global mean projection.
std::vector<bool> concept_presence(const MatX& member_features,
                                   const VecX& global_mean_feature,
                                   const std::vector<ConceptVector>& concepts);

// Weights indexed [class][cluster].
struct SamplingWeights {
  std::vector<std::vector<double>> size_weight;  // r(k,y) = 1/|C_k^y|
  std::vector<std::vector<double>> bias_score;   // S(k,y)
  std::vector<std::vector<double>> weight;       // W(k,y) = S(k,y) * r(k,y)
  std::vector<std::vector<double>> prob;         // W normalized within class
  std::vector<std::vector<double>> size_prob;    // P_size, sums to 1 over all (k,y)
};

// presence[y][k][l] says concept l appears in cluster C_k^y. The MCSS
// probability normalizes over L_y, the union of the per-cluster presence
// sets of class y; S(k,y) is the union probability of the member concepts'
// events under independence. Classes whose weights all vanish fall back to
// uniform over nonempty clusters.
SamplingWeights sampling_weights(
    const std::vector<std::vector<Index>>& cluster_sizes,
    const std::vector<CssRecord>& css_records,
    const std::vector<std::vector<std::vector<bool>>>& presence);

// Draws a partner frame of the same class: cluster ~ prob[y] (or the
// class-normalized size weights when size_only), then uniform within the
// cluster, avoiding `self` whenever the cluster has another member.
Index sample_partner(Index self, int y, const SamplingWeights& weights,
                     const std::vector<std::vector<std::vector<Index>>>& members,
                     Rng& rng, bool size_only = false);

}  // namespace fairscope
