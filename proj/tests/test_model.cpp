#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "shpjf/errors.hpp"
#include "shpjf/ops.hpp"

using namespace shpjf;
using namespace shpjf::testing;

namespace {

ScoringGroup group_of(const UserView& user, const std::vector<JobView>& jobs, std::vector<std::size_t> picks,
                      std::vector<int> labels = {}) {
  ScoringGroup g;
  g.user = &user;
  for (auto p : picks) g.jobs.push_back(&jobs[p]);
  g.labels = std::move(labels);
  return g;
}

double single_loss(const ShpjfModel& m, const UserView& u, const JobView& j, int label) {
  ScoringGroup g;
  g.user = &u;
  g.jobs = {&j};
  g.labels = {label};
  return m.batch_loss(std::span<const ScoringGroup>(&g, 1)).item();
}

void zero_final_layer(ShpjfModel& m) {
  for (auto& v : m.prediction_mlp_.weights.back().mutable_values()) v = 0.0;
  for (auto& v : m.prediction_mlp_.biases.back().mutable_values()) v = 0.0;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("shpjf_test_model_" + name);
}

}  // namespace

TEST(ScorePair, ZeroFinalLayerGivesHalf) {
  MicroWorld w;
  for (auto variant : {Variant::full, Variant::text_only, Variant::no_c}) {
    auto m = micro_model(variant);
    zero_final_layer(m);
    for (const auto& u : w.users)
      for (const auto& j : w.jobs) EXPECT_EQ(m.score_pair(u, j).y_hat, 0.5);
    EXPECT_NEAR(single_loss(m, w.users[0], w.jobs[1], 1), std::log(2.0), 1e-15);
  }
}

TEST(ScorePair, ZeroUserEmbeddingGivesZeroMatch) {
  MicroWorld w;
  auto m = micro_model();
  auto row = m.user_.table.mutable_values();
  for (std::size_t c = 0; c < m.user_.dim(); ++c) row[1 * m.user_.dim() + c] = 0.0;
  for (const auto& j : w.jobs) EXPECT_EQ(m.score_pair(w.users[1], j).s_match, 0.0);
  EXPECT_NE(m.score_pair(w.users[0], w.jobs[0]).s_match, 0.0);
}

TEST(ScorePair, MatchesStagedPipeline) {
  MicroWorld w;
  const auto m = micro_model();
  const auto& cfg = m.config();
  for (std::size_t ui = 0; ui < w.users.size(); ++ui) {
    const auto& u = w.users[ui];
    for (const auto& j : w.jobs) {
      const auto text = cross_encode(u.resume, j.jd, m.encoder_, m.word_);
      const std::int64_t jid[] = {j.job_id}, uid[] = {u.user_id};
      const auto hj = embed_ids(jid, m.job_);
      const auto hu = embed_ids(uid, m.user_);
      double s = 0.0;
      for (std::size_t c = 0; c < cfg.id_dim; ++c) s += hj.at(c) * hu.at(c);
      Tensor o_i;
      if (u.history.empty()) {
        o_i = m.empty_intention_;
      } else {
        std::vector<std::int64_t> hist_ids;
        std::vector<Tensor> queries;
        for (const auto& e : u.history) {
          hist_ids.push_back(e.job_id);
          queries.push_back(ops::matmul(pool_tokens(e.query, m.word_), m.query_proj_));
        }
        const auto H_J = embed_ids(hist_ids, m.job_);
        const auto H_Q = ops::concat_rows(queries);
        const auto cj = cluster_job_stream(H_J, m.cluster_job_).clustered;
        const auto joint = cluster_joint(H_Q, H_J, m.cluster_joint_);
        const auto e_j = job_intention(hj, cj, m.attn_job_);
        const auto e_q = query_intention(encode_job_desc(j.jd, m.word_, m.jd_proj_), joint.clustered_query,
                                         joint.clustered_job, m.attn_query_);
        o_i = intention_match(fuse_intentions(e_j, e_q, cfg.lambda), hj, m.intention_mlp_);
      }
      const Tensor parts[] = {text, ops::reshape(o_i, {1, cfg.intention_out}), Tensor::from({1, 1}, {s})};
      const double expected = ops::sigmoid(mlp_forward(ops::concat_cols(parts), m.prediction_mlp_)).item();
      const auto scored = m.score_pair(u, j);
      EXPECT_NEAR(scored.y_hat, expected, 1e-10) << "user " << ui << " job " << j.job_id;
      EXPECT_NEAR(scored.s_match, s, 1e-14);
    }
  }
}

TEST(ScorePair, DeterministicAndStrictlyInsideUnitInterval) {
  MicroWorld w;
  const auto a = micro_model(Variant::full, 9), b = micro_model(Variant::full, 9);
  for (const auto& u : w.users)
    for (const auto& j : w.jobs) {
      const double y = a.score_pair(u, j).y_hat;
      EXPECT_EQ(y, b.score_pair(u, j).y_hat);
      EXPECT_EQ(y, a.score_pair(u, j).y_hat);
      EXPECT_GT(y, 0.0);
      EXPECT_LT(y, 1.0);
    }
}

TEST(ScorePair, UnknownIdsAndEmptyTextRaise) {
  MicroWorld w;
  const auto m = micro_model();
  UserView ghost{99, {5, 6}, {}};
  EXPECT_THROW(m.score_pair(ghost, w.jobs[0]), LookupError);
  JobView ghost_job{99, {5, 6}};
  EXPECT_THROW(m.score_pair(w.users[0], ghost_job), LookupError);
  UserView silent{0, {}, {}};
  EXPECT_THROW(m.score_pair(silent, w.jobs[0]), ValidationError);
  JobView blank{0, {}};
  EXPECT_THROW(m.score_pair(w.users[0], blank), ValidationError);
  UserView bad_history = w.users[0];
  bad_history.history[0].job_id = 77;
  EXPECT_THROW(m.score_pair(bad_history, w.jobs[0]), LookupError);
}

TEST(BatchLoss, DecomposesOverPairs) {
  MicroWorld w;
  const auto m = micro_model();
  const std::vector<ScoringGroup> groups{group_of(w.users[0], w.jobs, {0, 2}, {1, 0}),
                                         group_of(w.users[3], w.jobs, {1, 4}, {0, 1})};
  const double batch = m.batch_loss(groups).item();
  const double parts = single_loss(m, w.users[0], w.jobs[0], 1) + single_loss(m, w.users[0], w.jobs[2], 0) +
                       single_loss(m, w.users[3], w.jobs[1], 0) + single_loss(m, w.users[3], w.jobs[4], 1);
  EXPECT_NEAR(batch, parts, 1e-12);
}

TEST(BatchLoss, DuplicatedPairDoublesLoss) {
  MicroWorld w;
  const auto m = micro_model();
  const std::vector<ScoringGroup> twice{group_of(w.users[1], w.jobs, {3, 3}, {1, 1})};
  EXPECT_EQ(m.batch_loss(twice).item(), 2.0 * single_loss(m, w.users[1], w.jobs[3], 1));
}

TEST(BatchLoss, GradientsReachEveryParameter) {
  MicroWorld w;
  for (auto variant : {Variant::full, Variant::no_q, Variant::no_j, Variant::no_c, Variant::text_only}) {
    const auto m = micro_model(variant);
    std::vector<ScoringGroup> groups;
    for (std::size_t u = 0; u < w.users.size(); ++u)
      groups.push_back(group_of(w.users[u], w.jobs, {u, u + 1, 5}, {1, 0, 0}));
    Tape tape;
    {
      Tape::Scope scope(tape);
      backward(m.batch_loss(groups), tape);
    }
    for (const auto& [name, t] : m.named_parameters()) {
      double total = 0.0;
      for (double g : t.grad()) total += std::abs(g);
      EXPECT_GT(total, 0.0) << to_string(variant) << " " << name;
    }
  }
}

TEST(BatchLoss, MissingLabelsRaise) {
  MicroWorld w;
  const auto m = micro_model();
  const std::vector<ScoringGroup> groups{group_of(w.users[0], w.jobs, {0, 1}, {1})};
  EXPECT_THROW(m.batch_loss(groups), ValidationError);
}

TEST(Variants, FullWithLambdaOneEqualsNoQ) {
  MicroWorld w;
  auto cfg = micro_config();
  cfg.lambda = 1.0;
  const ShpjfModel full(cfg, MicroWorld::kVocab, MicroWorld::kUsers, MicroWorld::kJobs, 3);
  auto no_q = micro_model(Variant::no_q, 8);
  EXPECT_GT(no_q.copy_shared_parameters(full), 0u);
  for (const auto& u : w.users)
    for (const auto& j : w.jobs) EXPECT_EQ(full.score_pair(u, j).y_hat, no_q.score_pair(u, j).y_hat);
}

TEST(Variants, FullWithLambdaZeroEqualsNoJ) {
  MicroWorld w;
  auto cfg = micro_config();
  cfg.lambda = 0.0;
  const ShpjfModel full(cfg, MicroWorld::kVocab, MicroWorld::kUsers, MicroWorld::kJobs, 3);
  auto no_j = micro_model(Variant::no_j, 8);
  no_j.copy_shared_parameters(full);
  for (const auto& u : w.users)
    for (const auto& j : w.jobs) EXPECT_EQ(full.score_pair(u, j).y_hat, no_j.score_pair(u, j).y_hat);
}

TEST(Variants, NoClusteringMatchesFullUnderPermutationAssignment) {
  // With L = k and saturated cluster logits, the assignment is a permutation
  // matrix and clustering only reorders the history.
  MicroWorld w;
  auto full = micro_model(Variant::full);
  const std::size_t d = full.config().id_dim;
  UserView user = w.users[0];
  user.history.resize(2);
  user.history[0].job_id = 1;
  user.history[1].job_id = 4;
  auto jobs = full.job_.table.mutable_values();
  for (std::size_t c = 0; c < d; ++c) {
    jobs[1 * d + c] = c == 0 ? 1.0 : 0.0;
    jobs[4 * d + c] = c == 1 ? 1.0 : 0.0;
  }
  auto w1 = full.cluster_job_.weight.mutable_values();
  auto w2 = full.cluster_joint_.weight.mutable_values();
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  // Entry 0 -> cluster 1, entry 1 -> cluster 0.
  w1[1 * d + 0] = 2000.0;
  w1[0 * d + 1] = 2000.0;
  w2[1 * 2 * d + d + 0] = 2000.0;
  w2[0 * 2 * d + d + 1] = 2000.0;
  const auto state = full.intention_state(user);
  EXPECT_EQ(state.cj.at(0, 1), 1.0);
  EXPECT_EQ(state.cj.at(1, 0), 1.0);

  auto no_c = micro_model(Variant::no_c, 8);
  no_c.copy_shared_parameters(full);
  for (const auto& j : w.jobs) EXPECT_NEAR(full.score_pair(user, j).y_hat, no_c.score_pair(user, j).y_hat, 1e-12);
}

TEST(Variants, AllFiniteAndInRange) {
  MicroWorld w;
  for (auto variant : {Variant::full, Variant::no_q, Variant::no_j, Variant::no_c, Variant::text_only}) {
    const auto m = micro_model(variant);
    for (const auto& u : w.users)
      for (const auto& j : w.jobs) {
        const double y = m.score_pair(u, j).y_hat;
        EXPECT_TRUE(std::isfinite(y));
        EXPECT_GT(y, 0.0);
        EXPECT_LT(y, 1.0);
      }
  }
}

TEST(Variants, TextOnlyHasNoIntentionParameters) {
  const auto m = micro_model(Variant::text_only);
  for (const auto& [name, t] : m.named_parameters()) {
    EXPECT_EQ(name.find("cluster"), std::string::npos) << name;
    EXPECT_EQ(name.find("attn"), std::string::npos) << name;
    EXPECT_EQ(name.find("intention"), std::string::npos) << name;
  }
  EXPECT_EQ(m.prediction_mlp_.input_width(), m.config().word_dim);
  EXPECT_THROW(parse_variant("w/o everything"), ConfigError);
  for (auto v : {Variant::full, Variant::no_q, Variant::no_j, Variant::no_c, Variant::text_only})
    EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(Variants, EmptyHistoryUsesLearnedConstant) {
  MicroWorld w;
  const auto m = micro_model();
  const auto& silent = w.users.back();
  ASSERT_TRUE(silent.history.empty());
  ForwardTrace trace;
  ScoringGroup g = group_of(silent, w.jobs, {0, 1});
  m.forward(std::span<const ScoringGroup>(&g, 1), {}, &trace);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < m.config().intention_out; ++c)
      EXPECT_EQ(trace.intention.at(r, c), m.empty_intention_.at(c));
  EXPECT_NE(m.score_pair(silent, w.jobs[0]).s_match, 0.0);
}

TEST(GradCheck, MicroModelBelowTolerance) { EXPECT_LT(micro_grad_check(), 1e-3); }

TEST(ModelConfig, TextRoundTripAndValidation) {
  auto c = micro_config(Variant::no_c);
  c.lambda = 0.25;
  c.cluster_axis = ClusterSoftmaxAxis::history;
  const auto back = ModelConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ModelConfig::parse("lambda = 0.5\nmystery = 3\n"), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  MicroWorld w;
  for (auto variant : {Variant::full, Variant::text_only}) {
    const auto m = micro_model(variant, 21);
    const auto path = temp_path("ckpt_" + to_string(variant));
    m.save(path);
    const auto loaded = ShpjfModel::load(path);
    EXPECT_EQ(loaded.config().to_text(), m.config().to_text());
    const auto a = m.named_parameters(), b = loaded.named_parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].first, b[i].first);
      EXPECT_EQ(a[i].second.shape(), b[i].second.shape());
      EXPECT_TRUE(std::equal(a[i].second.values().begin(), a[i].second.values().end(),
                             b[i].second.values().begin()));
    }
    for (const auto& j : w.jobs) EXPECT_EQ(m.score_pair(w.users[0], j).y_hat, loaded.score_pair(w.users[0], j).y_hat);
    const auto again = temp_path("ckpt_again");
    loaded.save(again);
    std::ifstream x(path, std::ios::binary), y(again, std::ios::binary);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(x), {}), std::string(std::istreambuf_iterator<char>(y), {}));
    std::filesystem::remove(path);
    std::filesystem::remove(again);
  }
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  const auto path = temp_path("bogus");
  {
    std::ofstream out(path);
    out << "definitely not a checkpoint";
  }
  EXPECT_THROW(ShpjfModel::load(path), ValidationError);
  EXPECT_THROW(ShpjfModel::load(temp_path("does_not_exist")), ValidationError);

  const auto m = micro_model();
  m.save(path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_ANY_THROW(ShpjfModel::load(path));
  std::filesystem::remove(path);
}
