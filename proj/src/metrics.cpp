#include "shpjf/metrics.hpp"

#include <algorithm>
#include <set>

#include "shpjf/errors.hpp"

namespace shpjf {

std::optional<double> per_user_auc(std::span<const ScoredInteraction> entries) {
  std::vector<std::pair<double, int>> sorted;
  sorted.reserve(entries.size());
  std::size_t positives = 0;
  for (const auto& e : entries) {
    sorted.emplace_back(e.score, e.label);
    positives += e.label == 1;
  }
  const std::size_t negatives = entries.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Walk tie blocks in ascending score order; every positive beats all
  // negatives strictly below it and half of those tied with it. Counts are
  // kept in halves so the sum stays an exact integer.
  std::uint64_t half_wins = 0;
  std::size_t negatives_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i, pos = 0, neg = 0;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      (sorted[j].second == 1 ? pos : neg) += 1;
      ++j;
    }
    half_wins += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    i = j;
  }
  return static_cast<double>(half_wins) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double gauc(std::span<const UserAuc> users, GaucWeighting weighting) {
  if (users.empty()) throw EvaluationError("GAUC is undefined: no user has both positive and negative samples");
  double total = 0.0, weight = 0.0;
  for (const auto& u : users) {
    const double w = weighting == GaucWeighting::impressions ? static_cast<double>(u.impressions) : 1.0;
    total += w * u.auc;
    weight += w;
  }
  return total / weight;
}

std::size_t positive_rank(std::span<const ScoredInteraction> impression) {
  const ScoredInteraction* positive = nullptr;
  for (const auto& e : impression) {
    if (e.label != 1) continue;
    if (positive != nullptr) throw EvaluationError("impression holds more than one positive");
    positive = &e;
  }
  if (positive == nullptr) throw EvaluationError("impression holds no positive");
  std::size_t rank = 1;
  for (const auto& e : impression) {
    if (&e == positive) continue;
    if (e.score > positive->score || (e.score == positive->score && e.job_id < positive->job_id)) ++rank;
  }
  return rank;
}

namespace {

std::vector<std::vector<ScoredInteraction>> by_impression(std::span<const ScoredInteraction> entries) {
  std::map<std::int64_t, std::vector<ScoredInteraction>> groups;
  for (const auto& e : entries) groups[e.impression_id].push_back(e);
  if (groups.empty()) throw EvaluationError("no impression groups to evaluate");
  std::vector<std::vector<ScoredInteraction>> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) out.push_back(std::move(g));
  return out;
}

}  // namespace

double recall_at_k(std::span<const ScoredInteraction> entries, std::size_t k) {
  if (k == 0) throw EvaluationError("recall@k needs k >= 1");
  const auto groups = by_impression(entries);
  std::size_t hits = 0;
  for (const auto& g : groups) hits += positive_rank(g) <= k;
  return static_cast<double>(hits) / static_cast<double>(groups.size());
}

double mrr(std::span<const ScoredInteraction> entries) {
  const auto groups = by_impression(entries);
  double total = 0.0;
  for (const auto& g : groups) total += 1.0 / static_cast<double>(positive_rank(g));
  return total / static_cast<double>(groups.size());
}

EvalReport compute_report(std::span<const ScoredInteraction> entries, GaucWeighting weighting) {
  EvalReport report;
  std::map<UserId, std::vector<ScoredInteraction>> users;
  std::map<UserId, std::set<std::int64_t>> impressions;
  for (const auto& e : entries) {
    users[e.user_id].push_back(e);
    impressions[e.user_id].insert(e.impression_id);
  }
  std::vector<UserAuc> valid;
  for (const auto& [user, list] : users) {
    if (auto auc = per_user_auc(list)) {
      report.per_user_auc[user] = *auc;
      valid.push_back({user, *auc, impressions[user].size()});
    } else {
      ++report.skipped_users;
    }
  }
  report.gauc = gauc(valid, weighting);
  const auto groups = by_impression(entries);
  report.impressions = groups.size();
  std::size_t hit1 = 0, hit5 = 0;
  double rr = 0.0;
  for (const auto& g : groups) {
    const auto rank = positive_rank(g);
    hit1 += rank <= 1;
    hit5 += rank <= 5;
    rr += 1.0 / static_cast<double>(rank);
  }
  const auto n = static_cast<double>(groups.size());
  report.recall_at_1 = static_cast<double>(hit1) / n;
  report.recall_at_5 = static_cast<double>(hit5) / n;
  report.mrr = rr / n;
  return report;
}

}  // namespace shpjf
