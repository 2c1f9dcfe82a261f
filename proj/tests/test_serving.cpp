#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "shpjf/errors.hpp"
#include "shpjf/serving.hpp"

using namespace shpjf;
using namespace shpjf::testing;

namespace {

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.defined() != b.defined()) return false;
  if (!a.defined()) return true;
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

bool same_state(const IntentionState& a, const IntentionState& b) {
  return a.empty == b.empty && same_values(a.cj, b.cj) && same_values(a.cj_prime, b.cj_prime) &&
         same_values(a.cq, b.cq);
}

}  // namespace

TEST(Refresh, RepeatableAndCountsGenerations) {
  MicroWorld w;
  const auto m = micro_model();
  IntentionCache cache(3600);
  EXPECT_EQ(cache.generation(), 0u);
  EXPECT_TRUE(cache.due(0));
  EXPECT_EQ(cache.refresh(m, w.users, 100), 1u);
  const auto first = cache.snapshot();
  EXPECT_FALSE(cache.due(100 + 3599));
  EXPECT_TRUE(cache.due(100 + 3600));
  EXPECT_EQ(cache.refresh(m, w.users, 200), 2u);
  const auto second = cache.snapshot();
  EXPECT_EQ(second->generation, first->generation + 1);
  ASSERT_EQ(first->states.size(), w.users.size());
  for (const auto& [user, state] : first->states) EXPECT_TRUE(same_state(state, second->states.at(user)));
  EXPECT_TRUE(first->states.at(w.users.back().user_id).empty);
}

TEST(Refresh, OnlyTheChangedUserDiffers) {
  MicroWorld w;
  const auto m = micro_model();
  IntentionCache cache;
  cache.refresh(m, w.users, 0);
  const auto before = cache.snapshot();
  auto users = w.users;
  users[1].history.push_back({{7, 8}, 2, 99});
  cache.refresh(m, users, 1);
  const auto after = cache.snapshot();
  for (const auto& u : users) {
    const bool same = same_state(before->states.at(u.user_id), after->states.at(u.user_id));
    EXPECT_EQ(same, u.user_id != 1) << "user " << u.user_id;
  }
}

TEST(Refresh, TextOnlyModelHasNothingToCache) {
  MicroWorld w;
  IntentionCache cache;
  EXPECT_THROW(cache.refresh(micro_model(Variant::text_only), w.users, 0), ConfigError);
}

TEST(ScoreOnline, MatchesFullForwardOnRandomImpressions) {
  MicroWorld w;
  for (auto variant : {Variant::full, Variant::no_q, Variant::no_j, Variant::no_c, Variant::text_only}) {
    const auto m = micro_model(variant, 13);
    IntentionCache cache;
    if (variant != Variant::text_only) cache.refresh(m, w.users, 0);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> pick_user(0, w.users.size() - 1), pick_job(0, w.jobs.size() - 1);
    for (int trial = 0; trial < 25; ++trial) {
      const auto& user = w.users[pick_user(rng)];
      std::vector<JobView> impression;
      for (int i = 0; i < 4; ++i) impression.push_back(w.jobs[pick_job(rng)]);
      const auto online = score_online(m, user, impression, cache);
      ASSERT_EQ(online.ranked.size(), impression.size());
      EXPECT_TRUE(online.cache_hit);
      for (const auto& s : online.ranked) {
        const auto full = m.score_pair(user, w.jobs[s.job_id]);
        EXPECT_NEAR(s.y_hat, full.y_hat, 1e-9);
      }
    }
  }
}

TEST(ScoreOnline, EmptyImpressionIsEmpty) {
  MicroWorld w;
  const auto m = micro_model();
  IntentionCache cache;
  cache.refresh(m, w.users, 0);
  const auto out = score_online(m, w.users[0], {}, cache);
  EXPECT_TRUE(out.ranked.empty());
  EXPECT_EQ(out.generation, 1u);
}

TEST(ScoreOnline, SortedDescendingWithJobIdTieBreak) {
  std::vector<ScoredPair> pairs;
  const double scores[] = {0.2, 0.9, 0.5, 0.5, 0.1, 0.9, 0.3, 0.5, 0.7};
  for (int i = 0; i < 9; ++i) pairs.push_back({0, 8 - i, scores[i]});
  rank_scored_pairs(pairs);
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    EXPECT_GE(pairs[i - 1].y_hat, pairs[i].y_hat);
    if (pairs[i - 1].y_hat == pairs[i].y_hat) EXPECT_LT(pairs[i - 1].job_id, pairs[i].job_id);
  }

  MicroWorld w;
  const auto m = micro_model();
  IntentionCache cache;
  cache.refresh(m, w.users, 0);
  std::vector<JobView> impression;
  for (int i = 0; i < 9; ++i) impression.push_back(w.jobs[i % w.jobs.size()]);
  const auto out = score_online(m, w.users[0], impression, cache);
  ASSERT_EQ(out.ranked.size(), 9u);
  for (std::size_t i = 1; i < out.ranked.size(); ++i) {
    EXPECT_GE(out.ranked[i - 1].y_hat, out.ranked[i].y_hat);
    if (out.ranked[i - 1].y_hat == out.ranked[i].y_hat) EXPECT_LE(out.ranked[i - 1].job_id, out.ranked[i].job_id);
  }
}

TEST(ScoreOnline, MissFallsBackToEmptyHistory) {
  MicroWorld w;
  const auto m = micro_model();
  IntentionCache cache;
  cache.refresh(m, std::span<const UserView>(w.users.data(), 1), 0);
  ::testing::internal::CaptureStderr();
  const auto out = score_online(m, w.users[2], std::span<const JobView>(w.jobs.data(), 2), cache);
  const auto err = ::testing::internal::GetCapturedStderr();
  EXPECT_FALSE(out.cache_hit);
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_NE(err.find("cache miss"), std::string::npos);
  UserView without_history = w.users[2];
  without_history.history.clear();
  for (const auto& s : out.ranked)
    EXPECT_NEAR(s.y_hat, m.score_pair(without_history, w.jobs[s.job_id]).y_hat, 1e-12);
}

TEST(ScoreOnline, CostIndependentOfHistoryLength) {
  MicroWorld w;
  const auto m = micro_model();
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<JobId> job(0, MicroWorld::kJobs - 1);
  std::vector<std::uint64_t> costs;
  for (std::size_t length : {4, 64}) {
    UserView user = w.users[0];
    user.history.clear();
    for (std::size_t i = 0; i < length; ++i) user.history.push_back({{5, 6}, job(rng), static_cast<Timestamp>(i)});
    IntentionCache cache;
    cache.refresh(m, std::span<const UserView>(&user, 1), 0);
    reset_op_count();
    score_online(m, user, std::span<const JobView>(w.jobs.data(), 5), cache);
    costs.push_back(op_count());
  }
  EXPECT_GT(costs[0], 0u);
  EXPECT_EQ(costs[0], costs[1]);
}

TEST(Cache, ConcurrentReadersSeeWholeGenerations) {
  MicroWorld w;
  const auto m = micro_model();
  IntentionCache cache;
  cache.refresh(m, w.users, 1);
  std::atomic<bool> done{false};
  std::atomic<std::size_t> torn{0}, reads{0}, started{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&] {
      started.fetch_add(1);
      while (!done.load()) {
        const auto snap = cache.snapshot();
        for (const auto& [user, state] : snap->states)
          if (state.computed_at != snap->refreshed_at) torn.fetch_add(1);
        if (snap->states.size() != w.users.size()) torn.fetch_add(1);
        reads.fetch_add(1);
      }
    });
  }
  // On a single core the writer could otherwise finish before any reader runs.
  while (started.load() < readers.size()) std::this_thread::yield();
  std::uint64_t last = cache.generation();
  for (Timestamp t = 2; t < 60; ++t) {
    const auto g = cache.refresh(m, w.users, t);
    EXPECT_EQ(g, last + 1);
    last = g;
    std::this_thread::yield();
  }
  done = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(torn.load(), 0u);
  EXPECT_GT(reads.load(), 0u);
}

TEST(Cache, DumpRoundTripIsBitExact) {
  MicroWorld w;
  const auto m = micro_model();
  IntentionCache cache(21600);
  cache.refresh(m, w.users, 10);
  cache.refresh(m, w.users, 20);
  const auto path = std::filesystem::temp_directory_path() / "shpjf_test_cache.bin";
  cache.save(path);
  const auto loaded = IntentionCache::load(path);
  EXPECT_EQ(loaded->generation(), 2u);
  EXPECT_EQ(loaded->refresh_interval(), 21600);
  const auto a = cache.snapshot(), b = loaded->snapshot();
  EXPECT_EQ(a->refreshed_at, b->refreshed_at);
  ASSERT_EQ(a->states.size(), b->states.size());
  for (const auto& [user, state] : a->states) {
    EXPECT_TRUE(same_state(state, b->states.at(user)));
    EXPECT_EQ(state.computed_at, b->states.at(user).computed_at);
  }
  const auto again = std::filesystem::temp_directory_path() / "shpjf_test_cache_again.bin";
  loaded->save(again);
  std::ifstream x(path, std::ios::binary), y(again, std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(x), {}), std::string(std::istreambuf_iterator<char>(y), {}));
  std::ofstream(path) << "garbage";
  EXPECT_THROW(IntentionCache::load(path), ValidationError);
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}
