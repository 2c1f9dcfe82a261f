#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shpjf/data.hpp"
#include "shpjf/encoders.hpp"
#include "shpjf/intention.hpp"
#include "shpjf/types.hpp"

namespace shpjf {

/// Model variants: the full model and the ablations that drop the query
/// stream, the job-ID stream, the clustering step, or the whole intention
/// component.
enum class Variant { full, no_q, no_j, no_c, text_only };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
std::string to_string(ClusterSoftmaxAxis axis);
ClusterSoftmaxAxis parse_cluster_axis(const std::string& name);
std::string to_string(QueryStreamValues values);
QueryStreamValues parse_query_values(const std::string& name);

struct ModelConfig {
  double lambda = 0.6;
  std::size_t clusters = 4;
  std::size_t heads = 1;
  std::size_t id_dim = 16;
  std::size_t word_dim = 128;
  double dropout = 0.2;
  std::size_t max_history = 16;
  std::size_t encoder_layers = 2;
  std::size_t encoder_heads = 2;
  std::size_t encoder_ff = 256;
  std::size_t max_tokens = 64;
  std::size_t intention_hidden = 64;
  std::size_t intention_out = 32;
  std::size_t prediction_hidden = 64;
  Variant variant = Variant::full;
  ClusterSoftmaxAxis cluster_axis = ClusterSoftmaxAxis::clusters;
  QueryStreamValues query_values = QueryStreamValues::cj_prime;

  CrossEncoderConfig encoder() const {
    return CrossEncoderConfig{encoder_layers, encoder_heads, word_dim, encoder_ff, max_tokens};
  }
  bool uses_job_stream() const;
  bool uses_query_stream() const;
  bool uses_intention() const { return variant != Variant::text_only; }

  void validate() const;
  std::string to_text() const;
  static ModelConfig parse(const std::string& text);
};

/// Score of one (user, job) pair with summaries of its building blocks.
struct ScoredPair {
  UserId user_id = 0;
  JobId job_id = 0;
  double y_hat = 0.0;
  double text_norm = 0.0;       // |o_T|
  double intention_norm = 0.0;  // |o_I|, 0 for text_only
  double s_match = 0.0;
};

/// One user against a list of candidate jobs (an impression).
struct ScoringGroup {
  const UserView* user = nullptr;
  std::vector<const JobView*> jobs;
  std::vector<int> labels;                // only needed for losses
  const IntentionState* state = nullptr;  // precomputed intentions, if any
};

/// Intermediate tensors of the last forward, for tests and diagnostics.
struct ForwardTrace {
  Tensor text;       // o_T [P x d_w]
  Tensor intention;  // o_I [P x d_o]
  Tensor s_match;    // [P x 1]
  std::vector<IntentionState> states;
  std::vector<AttentionWeights> job_attention, query_attention;
};

class ShpjfModel {
 public:
  ShpjfModel(const ModelConfig& config, std::size_t vocab_size, std::size_t users, std::size_t jobs,
             std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t vocab_size() const { return word_.size(); }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_jobs() const { return num_jobs_; }

  /// Parameters present in this variant, with stable names.
  NamedParams named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::optional<Tensor> parameter(const std::string& name) const;

  /// Clustered intentions of a user. Users without history get an empty state.
  IntentionState intention_state(const UserView& user, Timestamp at = 0) const;

  /// Match probabilities for every (group, job) in order, as [P x 1].
  Tensor forward(std::span<const ScoringGroup> groups, const ForwardContext& ctx = {},
                 ForwardTrace* trace = nullptr) const;

  /// Summed BCE over every labelled pair.
  Tensor batch_loss(std::span<const ScoringGroup> groups, const ForwardContext& ctx = {}) const;

  std::vector<ScoredPair> score_group(const UserView& user, std::span<const JobView> jobs,
                                      const IntentionState* state = nullptr) const;
  ScoredPair score_pair(const UserView& user, const JobView& job) const;

  /// Copies values of every identically named and shaped parameter of
  /// `other`. Returns the number of tensors copied.
  std::size_t copy_shared_parameters(const ShpjfModel& other);
  ShpjfModel clone() const;

  void save(const std::filesystem::path& path) const;
  static ShpjfModel load(const std::filesystem::path& path);

  // Components, exposed for oracles in tests.
  EmbeddingTable word_, job_, user_;
  CrossEncoder encoder_;
  Tensor query_proj_, jd_proj_;
  ClusterLayer cluster_job_, cluster_joint_;
  MultiHeadAttention attn_job_, attn_query_;
  Mlp intention_mlp_, prediction_mlp_;
  Tensor empty_intention_;

 private:
  ModelConfig config_;
  std::size_t num_users_ = 0, num_jobs_ = 0;
};

/// Relative gradient error of the full model's BCE loss on a two-user micro
/// setup (V=20, L=3, k=2, d_j=4, d_w=8, one encoder layer).
double micro_grad_check(double step = 1e-5, std::uint64_t seed = 11);

inline constexpr const char kCheckpointMagic[8] = {'S', 'H', 'P', 'J', 'F', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace shpjf
