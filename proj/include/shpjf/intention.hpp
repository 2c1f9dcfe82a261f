#pragma once

#include <random>
#include <vector>

#include "shpjf/types.hpp"

namespace shpjf {

/// Which axis the cluster-assignment softmax normalizes. `clusters` makes
/// every history entry a distribution over the k intentions (each column of
/// P sums to 1); `history` normalizes each cluster over history positions.
enum class ClusterSoftmaxAxis { clusters, history };

/// Values used by the query-stream attention: C_J' (clustered with the joint
/// assignment P_Q) or the job-stream C_J.
enum class QueryStreamValues { cj_prime, cj };

/// Soft-assignment layer: logits = W [H]^T + b, W is [k x in], b is [k].
struct ClusterLayer {
  Tensor weight;
  Tensor bias;

  std::size_t clusters() const { return weight.rows(); }
};

ClusterLayer make_cluster_layer(std::size_t clusters, std::size_t input_dim, std::mt19937_64& rng);

struct JobClusters {
  Tensor assignment;  // P_J [k x L]
  Tensor clustered;   // C_J [k x d_j]
};

struct JointClusters {
  Tensor assignment;        // P_Q [k x L]
  Tensor clustered_query;   // C_Q [k x d_j]
  Tensor clustered_job;     // C_J' [k x d_j]
};

/// P_J = softmax(W1 H_J^T + b1), C_J = P_J H_J.
JobClusters cluster_job_stream(const Tensor& history_jobs, const ClusterLayer& layer,
                               ClusterSoftmaxAxis axis = ClusterSoftmaxAxis::clusters);

/// P_Q = softmax(W2 [H_Q ; H_J]^T + b2) with row-wise concatenation, then the
/// same assignment clusters both streams: C_Q = P_Q H_Q, C_J' = P_Q H_J.
JointClusters cluster_joint(const Tensor& history_queries, const Tensor& history_jobs, const ClusterLayer& layer,
                            ClusterSoftmaxAxis axis = ClusterSoftmaxAxis::clusters);

/// Shared by both cluster functions: assignment [k x L] from logits [L x k].
Tensor assignment_from_logits(const Tensor& logits, ClusterSoftmaxAxis axis);

struct MHAConfig {
  std::size_t heads = 1;
  std::size_t model_dim = 16;

  std::size_t head_dim() const { return model_dim / heads; }
  void validate() const;
};

/// Projections of one attention block; head i uses columns
/// [i*D, (i+1)*D) of wq/wk/wv.
struct MultiHeadAttention {
  MHAConfig config;
  Tensor wq, wk, wv, wo;  // [d x d] each
};

MultiHeadAttention make_attention(const MHAConfig& config, std::mt19937_64& rng);

/// Per-head attention probabilities, each [n_queries x n_keys].
struct AttentionWeights {
  std::vector<Tensor> per_head;
};

/// [head_1, ..., head_h] W^O with head_i = softmax(Q W_i^Q (K W_i^K)^T / sqrt(D)) V W_i^V.
/// `query` may hold several rows (one per candidate job).
Tensor multi_head_attend(const Tensor& query, const Tensor& keys, const Tensor& values,
                         const MultiHeadAttention& attention, AttentionWeights* weights = nullptr);

/// e_J: the job embedding attends over the job-stream intentions.
Tensor job_intention(const Tensor& job_embedding, const Tensor& clustered_jobs, const MultiHeadAttention& attention,
                     AttentionWeights* weights = nullptr);

/// e_Q: the description representation attends over query intentions (keys)
/// and reads out the job-side intentions (values).
Tensor query_intention(const Tensor& jd_repr, const Tensor& clustered_queries, const Tensor& clustered_job_values,
                       const MultiHeadAttention& attention, AttentionWeights* weights = nullptr);

/// lambda * e_J + (1 - lambda) * e_Q; lambda must lie in [0, 1].
Tensor fuse_intentions(const Tensor& job_side, const Tensor& query_side, double lambda);

/// Dense stack with ReLU between layers and a linear output layer.
struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t input_width() const { return weights.front().rows(); }
  std::size_t output_width() const { return weights.back().cols(); }
};

Mlp make_mlp(const std::vector<std::size_t>& widths, std::mt19937_64& rng);
Tensor mlp_forward(const Tensor& x, const Mlp& mlp, const ForwardContext& ctx = {});

/// [e; h; e - h; e * h], blocks in this order.
Tensor intention_features(const Tensor& fused, const Tensor& job_embedding);

/// o_I = MLP(intention_features(fused, job_embedding)).
Tensor intention_match(const Tensor& fused, const Tensor& job_embedding, const Mlp& mlp,
                       const ForwardContext& ctx = {});

/// Cacheable per-user output of intention clustering. Immutable once built.
struct IntentionState {
  Tensor cj;        // [k x d_j]
  Tensor cj_prime;  // [k x d_j]
  Tensor cq;        // [k x d_j]
  Timestamp computed_at = 0;
  bool empty = false;  // user had no search history

  static IntentionState empty_state(Timestamp at) {
    IntentionState s;
    s.computed_at = at;
    s.empty = true;
    return s;
  }
};

}  // namespace shpjf
