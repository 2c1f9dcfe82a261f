#pragma once

#include <random>
#include <vector>

#include "shpjf/model.hpp"

namespace shpjf::testing {

inline ModelConfig micro_config(Variant variant = Variant::full) {
  ModelConfig c;
  c.clusters = 2;
  c.heads = 1;
  c.id_dim = 4;
  c.word_dim = 8;
  c.dropout = 0.0;
  c.max_history = 3;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.encoder_ff = 8;
  c.max_tokens = 10;
  c.intention_hidden = 6;
  c.intention_out = 3;
  c.prediction_hidden = 5;
  c.variant = variant;
  return c;
}

/// Small hand-made world: users with and without search history and a few
/// jobs, all over a 20-token vocabulary.
struct MicroWorld {
  static constexpr std::size_t kVocab = 20;
  static constexpr std::size_t kUsers = 4;
  static constexpr std::size_t kJobs = 6;
  std::vector<UserView> users;
  std::vector<JobView> jobs;

  explicit MicroWorld(std::uint64_t seed = 5) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<TokenId> token(Vocabulary::kReserved, kVocab - 1);
    std::uniform_int_distribution<JobId> job(0, kJobs - 1);
    auto words = [&](std::size_t n) {
      std::vector<TokenId> out(n);
      for (auto& t : out) t = token(rng);
      return out;
    };
    for (std::size_t j = 0; j < kJobs; ++j) jobs.push_back({static_cast<JobId>(j), words(3 + j % 3)});
    for (std::size_t u = 0; u < kUsers; ++u) {
      UserView v{static_cast<UserId>(u), words(4 + u), {}};
      // The last user has no search history.
      const std::size_t history = u + 1 == kUsers ? 0 : 3;
      for (std::size_t i = 0; i < history; ++i) v.history.push_back({words(2), job(rng), static_cast<Timestamp>(i)});
      users.push_back(std::move(v));
    }
  }
};

inline ShpjfModel micro_model(Variant variant = Variant::full, std::uint64_t seed = 3) {
  return ShpjfModel(micro_config(variant), MicroWorld::kVocab, MicroWorld::kUsers, MicroWorld::kJobs, seed);
}

}  // namespace shpjf::testing
