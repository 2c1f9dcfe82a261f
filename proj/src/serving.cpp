#include "shpjf/serving.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "binary_io.hpp"
#include "shpjf/errors.hpp"

namespace shpjf {

std::shared_ptr<const CacheSnapshot> IntentionCache::snapshot() const {
  std::lock_guard lock(swap_mutex_);
  return current_;
}

bool IntentionCache::due(Timestamp now) const {
  const auto snap = snapshot();
  return snap->generation == 0 || now - snap->refreshed_at >= refresh_interval_;
}

std::uint64_t IntentionCache::refresh(const ShpjfModel& model, std::span<const UserView> users, Timestamp at) {
  if (!model.config().uses_intention()) throw ConfigError("text_only model has no intentions to cache");
  std::lock_guard refresh_lock(refresh_mutex_);
  auto next = std::make_shared<CacheSnapshot>();
  next->refreshed_at = at;
  for (const auto& user : users) next->states.emplace(user.user_id, model.intention_state(user, at));
  next->generation = snapshot()->generation + 1;
  std::lock_guard swap_lock(swap_mutex_);
  current_ = std::move(next);
  return current_->generation;
}

namespace {

void write_optional(std::ostream& out, const Tensor& t) {
  detail::write_pod<std::uint8_t>(out, t.defined() ? 1 : 0);
  if (t.defined()) detail::write_tensor(out, t);
}

Tensor read_optional(std::istream& in) {
  const auto present = detail::read_pod<std::uint8_t>(in);
  if (present > 1) throw ValidationError("corrupt cache dump");
  return present ? detail::read_tensor(in) : Tensor{};
}

}  // namespace

void IntentionCache::save(const std::filesystem::path& path) const {
  const auto snap = snapshot();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write cache dump " + path.string());
  out.write(kCacheMagic, sizeof(kCacheMagic));
  detail::write_pod<std::uint32_t>(out, kCacheVersion);
  detail::write_pod<std::uint64_t>(out, snap->generation);
  detail::write_pod<std::int64_t>(out, snap->refreshed_at);
  detail::write_pod<std::int64_t>(out, refresh_interval_);
  detail::write_pod<std::uint64_t>(out, snap->states.size());
  for (const auto& [user, state] : snap->states) {
    detail::write_pod<std::int64_t>(out, user);
    detail::write_pod<std::int64_t>(out, state.computed_at);
    detail::write_pod<std::uint8_t>(out, state.empty ? 1 : 0);
    write_optional(out, state.cj);
    write_optional(out, state.cj_prime);
    write_optional(out, state.cq);
  }
  if (!out) throw Error("failed writing cache dump " + path.string());
}

std::unique_ptr<IntentionCache> IntentionCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read cache dump " + path.string());
  char magic[sizeof(kCacheMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kCacheMagic))) {
    throw ValidationError(path.string() + " is not an intention cache dump");
  }
  if (detail::read_pod<std::uint32_t>(in) != kCacheVersion) throw ValidationError("unsupported cache dump version");
  auto snap = std::make_shared<CacheSnapshot>();
  snap->generation = detail::read_pod<std::uint64_t>(in);
  snap->refreshed_at = detail::read_pod<std::int64_t>(in);
  auto cache = std::make_unique<IntentionCache>(detail::read_pod<std::int64_t>(in));
  const auto count = detail::read_pod<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto user = detail::read_pod<std::int64_t>(in);
    IntentionState state;
    state.computed_at = detail::read_pod<std::int64_t>(in);
    state.empty = detail::read_pod<std::uint8_t>(in) != 0;
    state.cj = read_optional(in);
    state.cj_prime = read_optional(in);
    state.cq = read_optional(in);
    snap->states.emplace(user, std::move(state));
  }
  cache->current_ = std::move(snap);
  return cache;
}

void rank_scored_pairs(std::vector<ScoredPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& a, const ScoredPair& b) {
    return a.y_hat != b.y_hat ? a.y_hat > b.y_hat : a.job_id < b.job_id;
  });
}

OnlineResult score_online(const ShpjfModel& model, const UserView& user, std::span<const JobView> impression,
                          const IntentionCache& cache) {
  OnlineResult result;
  const auto snap = cache.snapshot();
  result.generation = snap->generation;
  if (impression.empty()) return result;
  if (!model.config().uses_intention()) {
    result.ranked = model.score_group(user, impression);
  } else {
    const IntentionState* state = nullptr;
    IntentionState fallback;
    if (auto it = snap->states.find(user.user_id); it != snap->states.end()) {
      state = &it->second;
    } else {
      cache.record_miss();
      result.cache_hit = false;
      std::cerr << "cache miss: user " << user.user_id << " not in generation " << snap->generation
                << "; scoring without search history\n";
      fallback = IntentionState::empty_state(snap->refreshed_at);
      state = &fallback;
    }
    result.ranked = model.score_group(user, impression, state);
  }
  rank_scored_pairs(result.ranked);
  return result;
}

}  // namespace shpjf
