#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "shpjf/model.hpp"

namespace shpjf {

/// One immutable generation of precomputed user intentions.
struct CacheSnapshot {
  std::uint64_t generation = 0;
  Timestamp refreshed_at = 0;
  std::map<UserId, IntentionState> states;
};

/// Lazily refreshed per-user intention matrices. Readers take a snapshot
/// pointer and never see a partially built generation; refreshes build the
/// next generation off to the side and swap it in.
class IntentionCache {
 public:
  explicit IntentionCache(Timestamp refresh_interval = 0) : refresh_interval_(refresh_interval) {}

  std::shared_ptr<const CacheSnapshot> snapshot() const;
  std::uint64_t generation() const { return snapshot()->generation; }
  Timestamp refresh_interval() const { return refresh_interval_; }
  /// True once `refresh_interval` seconds have passed since the last refresh
  /// (always true before the first one).
  bool due(Timestamp now) const;

  /// Recomputes every user's state with frozen parameters and installs the
  /// result as the next generation. Returns the new generation number.
  std::uint64_t refresh(const ShpjfModel& model, std::span<const UserView> users, Timestamp at);

  std::uint64_t misses() const { return misses_.load(); }
  void record_miss() const { misses_.fetch_add(1); }

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<IntentionCache> load(const std::filesystem::path& path);

 private:
  Timestamp refresh_interval_ = 0;
  mutable std::mutex swap_mutex_;
  std::mutex refresh_mutex_;
  std::shared_ptr<const CacheSnapshot> current_ = std::make_shared<CacheSnapshot>();
  mutable std::atomic<std::uint64_t> misses_{0};
};

struct OnlineResult {
  std::vector<ScoredPair> ranked;  // descending y_hat, ties by ascending job ID
  std::uint64_t generation = 0;
  bool cache_hit = true;
};

/// Scores an impression from cached intentions plus the text path. A user
/// missing from the cache is scored as if it had no history and the miss is
/// logged to stderr.
OnlineResult score_online(const ShpjfModel& model, const UserView& user, std::span<const JobView> impression,
                          const IntentionCache& cache);

void rank_scored_pairs(std::vector<ScoredPair>& pairs);

inline constexpr const char kCacheMagic[8] = {'S', 'H', 'P', 'J', 'F', 'I', 'C', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

}  // namespace shpjf
