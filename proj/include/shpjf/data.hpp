#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "shpjf/encoders.hpp"
#include "shpjf/types.hpp"

namespace shpjf {

struct HistoryEntry {
  std::vector<TokenId> query;
  JobId job_id = 0;
  Timestamp ts = 0;

  bool operator==(const HistoryEntry&) const = default;
};

/// Entries in temporal order.
using SearchHistory = std::vector<HistoryEntry>;

struct CandidateRecord {
  UserId user_id = 0;
  std::vector<TokenId> resume;
  SearchHistory history;

  bool operator==(const CandidateRecord&) const = default;
};

struct JobRecord {
  JobId job_id = 0;
  std::vector<TokenId> jd;
  // Generator-internal; never serialized.
  int latent_category = -1;

  bool operator==(const JobRecord& o) const { return job_id == o.job_id && jd == o.jd; }
};

struct InteractionRecord {
  UserId user_id = 0;
  JobId job_id = 0;
  int label = 0;
  std::int64_t impression_id = 0;
  Timestamp ts = 0;

  bool operator==(const InteractionRecord&) const = default;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<CandidateRecord> candidates;  // indexed by user_id
  std::vector<JobRecord> jobs;              // indexed by job_id
  std::vector<InteractionRecord> interactions;

  const CandidateRecord& candidate(UserId id) const;
  const JobRecord& job(JobId id) const;
  // Throws ValidationError on dangling IDs or malformed impression groups.
  void check_integrity() const;
};

/// Synthetic log generator settings. Sizes default to a desk-scale version
/// of a production recruitment log.
struct GeneratorConfig {
  std::size_t users = 5000;
  std::size_t jobs = 20000;
  std::size_t positives = 30000;
  std::size_t vocab_terms = 2000;
  std::size_t categories = 50;
  std::size_t terms_per_category = 30;
  std::size_t days = 10;
  double mean_history = 16.5;        // over all candidates, zero-history ones included
  double zero_history_fraction = 0.1;
  double intention_strength = 0.9;   // 0 = positives and history independent of the user's intentions
  double uninformative_resume_fraction = 0.3;
  std::size_t min_intentions = 1;
  std::size_t max_intentions = 3;
  std::size_t negatives_per_positive = 8;
  std::size_t exposure_size = 10;
  std::size_t jd_min_tokens = 8;
  std::size_t jd_max_tokens = 16;
  double jd_category_share = 0.7;

  void validate() const;
  // "key = value" lines; '#' starts a comment. Unknown keys are rejected.
  static GeneratorConfig parse(const std::string& text);
  static GeneratorConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

/// Generator output plus the latents needed by statistical tests.
struct GeneratedData {
  Dataset data;
  std::vector<std::vector<int>> user_intentions;  // latent intention categories per user
  std::vector<int> job_categories;
};

GeneratedData generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

/// A recommendation-list exposure around one positive.
struct Exposure {
  UserId user_id = 0;
  JobId positive = 0;
  std::int64_t impression_id = 0;
  Timestamp ts = 0;
  std::vector<JobId> shown;  // co-exposed jobs, positive excluded
};

/// Picks up to `ratio` negatives per exposure without replacement, skipping
/// jobs found in the user's search channel. Exposures with no usable jobs are
/// dropped (warning on stderr). Output holds the positive followed by its
/// negatives, all sharing the impression ID.
std::vector<InteractionRecord> sample_negatives(std::span<const Exposure> exposures, std::size_t ratio,
                                                const std::unordered_map<UserId, std::unordered_set<JobId>>& search_jobs,
                                                std::mt19937_64& rng);

struct Split {
  std::vector<InteractionRecord> train, val, test;
  Timestamp val_start = 0;
  Timestamp test_start = 0;
};

/// The last `test_days` days form the test split and the `val_days` before
/// them the validation split. `horizon_days` is the length of the log; 0
/// infers it from the latest timestamp.
Split temporal_split(std::span<const InteractionRecord> interactions, std::size_t val_days, std::size_t test_days,
                     std::size_t horizon_days = 0);

/// What the model may see of a user: the resume and the search history
/// strictly before `cutoff`, truncated to the most recent `max_history`.
struct UserView {
  UserId user_id = 0;
  std::vector<TokenId> resume;
  SearchHistory history;
};

struct JobView {
  JobId job_id = 0;
  std::vector<TokenId> jd;
};

UserView make_user_view(const CandidateRecord& record, Timestamp cutoff, std::size_t max_history);
std::vector<UserView> make_user_views(const Dataset& data, Timestamp cutoff, std::size_t max_history);
std::vector<JobView> make_job_views(const Dataset& data);

// Line-delimited JSON record files.
void save_candidates(std::span<const CandidateRecord> records, const Vocabulary& vocab,
                     const std::filesystem::path& path);
std::vector<CandidateRecord> load_candidates(const std::filesystem::path& path, const Vocabulary& vocab);
void save_jobs(std::span<const JobRecord> records, const Vocabulary& vocab, const std::filesystem::path& path);
std::vector<JobRecord> load_jobs(const std::filesystem::path& path, const Vocabulary& vocab);
void save_interactions(std::span<const InteractionRecord> records, const std::filesystem::path& path);
std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path);

/// vocab.txt, candidates.txt, jobs.txt, interactions.txt inside `dir`.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kCandidatesFile = "candidates.txt";
inline constexpr const char* kJobsFile = "jobs.txt";
inline constexpr const char* kInteractionsFile = "interactions.txt";

/// Summary statistics of a dataset (Table-style).
struct DatasetStats {
  std::size_t candidates = 0, jobs = 0, positives = 0, negatives = 0;
  double mean_history = 0.0;
  double mean_query_words = 0.0;
};

DatasetStats dataset_stats(const Dataset& data);

}  // namespace shpjf
