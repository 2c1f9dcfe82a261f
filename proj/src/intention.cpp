#include "shpjf/intention.hpp"

#include <cmath>
#include <string>

#include "shpjf/errors.hpp"
#include "shpjf/ops.hpp"

namespace shpjf {

ClusterLayer make_cluster_layer(std::size_t clusters, std::size_t input_dim, std::mt19937_64& rng) {
  if (clusters == 0) throw ConfigError("number of clusters k must be positive");
  return ClusterLayer{init_normal({clusters, input_dim}, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng),
                      Tensor::zeros({clusters}, true)};
}

Tensor assignment_from_logits(const Tensor& logits, ClusterSoftmaxAxis axis) {
  // logits are [L x k]; the clusters axis is the row direction here.
  const int softmax_axis = axis == ClusterSoftmaxAxis::clusters ? 1 : 0;
  return ops::transpose(ops::softmax(logits, softmax_axis));
}

JobClusters cluster_job_stream(const Tensor& history_jobs, const ClusterLayer& layer, ClusterSoftmaxAxis axis) {
  if (!layer.weight.defined() || layer.clusters() == 0) throw ConfigError("cluster layer has no clusters");
  if (history_jobs.rank() != 2 || history_jobs.rows() == 0) {
    throw ValidationError("cluster_job_stream needs a non-empty [L x d] history");
  }
  auto logits = ops::add_row_vector(ops::matmul_nt(history_jobs, layer.weight), layer.bias);
  auto assignment = assignment_from_logits(logits, axis);
  return JobClusters{assignment, ops::matmul(assignment, history_jobs)};
}

JointClusters cluster_joint(const Tensor& history_queries, const Tensor& history_jobs, const ClusterLayer& layer,
                            ClusterSoftmaxAxis axis) {
  if (!layer.weight.defined() || layer.clusters() == 0) throw ConfigError("cluster layer has no clusters");
  if (history_queries.rows() != history_jobs.rows()) {
    throw ValidationError("cluster_joint: " + std::to_string(history_queries.rows()) + " queries vs " +
                          std::to_string(history_jobs.rows()) + " jobs");
  }
  const Tensor parts[] = {history_queries, history_jobs};
  auto joint = ops::concat_cols(parts);
  auto logits = ops::add_row_vector(ops::matmul_nt(joint, layer.weight), layer.bias);
  auto assignment = assignment_from_logits(logits, axis);
  return JointClusters{assignment, ops::matmul(assignment, history_queries), ops::matmul(assignment, history_jobs)};
}

void MHAConfig::validate() const {
  if (heads == 0 || model_dim == 0 || model_dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

MultiHeadAttention make_attention(const MHAConfig& config, std::mt19937_64& rng) {
  config.validate();
  const auto d = config.model_dim;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  return MultiHeadAttention{config, init_normal({d, d}, stddev, rng), init_normal({d, d}, stddev, rng),
                            init_normal({d, d}, stddev, rng), init_normal({d, d}, stddev, rng)};
}

Tensor multi_head_attend(const Tensor& query, const Tensor& keys, const Tensor& values,
                         const MultiHeadAttention& attention, AttentionWeights* weights) {
  if (keys.rows() != values.rows()) {
    throw DimensionError("multi_head_attend: " + std::to_string(keys.rows()) + " keys vs " +
                         std::to_string(values.rows()) + " values");
  }
  const auto& cfg = attention.config;
  const auto q = ops::matmul(query, attention.wq);
  const auto k = ops::matmul(keys, attention.wk);
  const auto v = ops::matmul(values, attention.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  if (weights) weights->per_head.clear();
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const auto b = h * cfg.head_dim(), e = b + cfg.head_dim();
    const bool whole = cfg.heads == 1;
    auto qh = whole ? q : ops::slice_cols(q, b, e);
    auto kh = whole ? k : ops::slice_cols(k, b, e);
    auto vh = whole ? v : ops::slice_cols(v, b, e);
    auto probs = ops::softmax(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt), 1);
    if (weights) weights->per_head.push_back(probs);
    heads.push_back(ops::matmul(probs, vh));
  }
  auto merged = heads.size() == 1 ? heads.front() : ops::concat_cols(heads);
  return ops::matmul(merged, attention.wo);
}

Tensor job_intention(const Tensor& job_embedding, const Tensor& clustered_jobs, const MultiHeadAttention& attention,
                     AttentionWeights* weights) {
  return multi_head_attend(job_embedding, clustered_jobs, clustered_jobs, attention, weights);
}

Tensor query_intention(const Tensor& jd_repr, const Tensor& clustered_queries, const Tensor& clustered_job_values,
                       const MultiHeadAttention& attention, AttentionWeights* weights) {
  return multi_head_attend(jd_repr, clustered_queries, clustered_job_values, attention, weights);
}

Tensor fuse_intentions(const Tensor& job_side, const Tensor& query_side, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("fusion coefficient lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  return ops::add(ops::scale(job_side, lambda), ops::scale(query_side, 1.0 - lambda));
}

Mlp make_mlp(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0) throw ConfigError("MLP widths must be positive");
    mlp.weights.push_back(init_normal({widths[i], widths[i + 1]}, 1.0 / std::sqrt(static_cast<double>(widths[i])), rng));
    mlp.biases.push_back(Tensor::zeros({widths[i + 1]}, true));
  }
  return mlp;
}

Tensor mlp_forward(const Tensor& x, const Mlp& mlp, const ForwardContext& ctx) {
  if (x.cols() != mlp.input_width()) {
    throw ConfigError("MLP expects input width " + std::to_string(mlp.input_width()) + ", got " +
                      std::to_string(x.cols()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    h = ops::linear(h, mlp.weights[i], mlp.biases[i]);
    if (i + 1 < mlp.weights.size()) {
      h = ops::relu(h);
      if (ctx.dropout_active()) h = ops::dropout(h, ctx.dropout, *ctx.rng);
    }
  }
  return h;
}

Tensor intention_features(const Tensor& fused, const Tensor& job_embedding) {
  const Tensor parts[] = {fused, job_embedding, ops::sub(fused, job_embedding), ops::mul(fused, job_embedding)};
  return ops::concat_cols(parts);
}

Tensor intention_match(const Tensor& fused, const Tensor& job_embedding, const Mlp& mlp, const ForwardContext& ctx) {
  if (mlp.input_width() != 4 * fused.cols()) {
    throw ConfigError("intention MLP input width " + std::to_string(mlp.input_width()) + " != 4 * " +
                      std::to_string(fused.cols()));
  }
  return mlp_forward(intention_features(fused, job_embedding), mlp, ctx);
}

}  // namespace shpjf
