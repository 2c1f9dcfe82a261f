#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "shpjf/types.hpp"

namespace shpjf {

/// One scored interaction, the unit every ranking metric consumes.
struct ScoredInteraction {
  UserId user_id = 0;
  JobId job_id = 0;
  std::int64_t impression_id = 0;
  int label = 0;
  double score = 0.0;
};

/// Fraction of (positive, negative) pairs ordered correctly, ties counting
/// one half. Undefined (nullopt) unless both classes are present.
std::optional<double> per_user_auc(std::span<const ScoredInteraction> entries);

enum class GaucWeighting { unweighted, impressions };

struct UserAuc {
  UserId user_id = 0;
  double auc = 0.0;
  std::size_t impressions = 1;
};

/// Mean of per-user AUCs, optionally weighted by impression count. Throws
/// EvaluationError when no user is given.
double gauc(std::span<const UserAuc> users, GaucWeighting weighting = GaucWeighting::unweighted);

/// 1-based rank of the single positive of an impression, scores descending
/// and ties broken by ascending job ID. Throws EvaluationError unless the
/// impression holds exactly one positive.
std::size_t positive_rank(std::span<const ScoredInteraction> impression);

/// Entries are grouped by impression_id. Throw EvaluationError on an empty set.
double recall_at_k(std::span<const ScoredInteraction> entries, std::size_t k);
double mrr(std::span<const ScoredInteraction> entries);

struct EvalReport {
  double gauc = 0.0;
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double mrr = 0.0;
  std::map<UserId, double> per_user_auc;
  std::size_t skipped_users = 0;
  std::size_t impressions = 0;
};

EvalReport compute_report(std::span<const ScoredInteraction> entries,
                          GaucWeighting weighting = GaucWeighting::unweighted);

}  // namespace shpjf
