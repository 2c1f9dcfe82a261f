#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shpjf/data.hpp"
#include "shpjf/metrics.hpp"
#include "shpjf/model.hpp"

namespace shpjf {

/// Owns the user and job views that scoring groups point into. Histories are
/// cut at `history_cutoff` so no split sees search activity from the
/// evaluation period.
class Corpus {
 public:
  Corpus(const Dataset& data, Timestamp history_cutoff, std::size_t max_history);

  const UserView& user(UserId id) const;
  const JobView& job(JobId id) const;
  std::span<const UserView> users() const { return users_; }
  std::span<const JobView> jobs() const { return jobs_; }

  /// One group per impression, in order of first appearance.
  std::vector<ScoringGroup> groups(std::span<const InteractionRecord> interactions) const;

 private:
  std::vector<UserView> users_;
  std::vector<JobView> jobs_;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;  // impressions per step
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  GaucWeighting weighting = GaucWeighting::unweighted;
  // Where a NaN loss dumps the offending batch; empty keeps it in the error.
  std::filesystem::path diagnostics_dir;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean BCE per pair
  double val_gauc = 0.0;
  double elapsed_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_gauc = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Shuffled mini-batch Adam with early stopping on validation GAUC. On return
/// the model holds the parameters of the best validation epoch.
TrainResult train(ShpjfModel& model, const Corpus& corpus, std::span<const InteractionRecord> train_set,
                  std::span<const InteractionRecord> val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Scores every interaction with dropout off, reusing one intention state per user.
std::vector<ScoredInteraction> score_interactions(const ShpjfModel& model, const Corpus& corpus,
                                                  std::span<const InteractionRecord> interactions);

EvalReport evaluate(const ShpjfModel& model, const Corpus& corpus, std::span<const InteractionRecord> interactions,
                    GaucWeighting weighting = GaucWeighting::unweighted);

std::string format_epoch_log(const EpochLog& entry);

// ---------------------------------------------------------------------------

struct AblationConfig {
  std::vector<Variant> variants{Variant::text_only, Variant::no_q, Variant::no_j, Variant::no_c, Variant::full};
  std::vector<std::uint64_t> seeds{1};
  std::size_t val_days = 1;
  std::size_t test_days = 1;
  std::size_t horizon_days = 0;
};

struct AblationRun {
  Variant variant = Variant::full;
  std::uint64_t seed = 0;
  double best_val_gauc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs = 0;
  double seconds = 0.0;
  EvalReport test;
};

struct AblationRow {
  Variant variant = Variant::full;
  // Medians over seeds.
  double gauc = 0.0, recall_at_1 = 0.0, recall_at_5 = 0.0, mrr = 0.0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> rows;  // one per variant, in request order
};

using RunCallback = std::function<void(const AblationRun&)>;

/// Trains every variant for every seed on one shared temporal split. The
/// model seed and the training seed are both the run seed.
AblationResult run_ablation(const Dataset& data, const ModelConfig& model_config, const TrainConfig& train_config,
                            const AblationConfig& ablation, const RunCallback& on_run = {});

std::string format_ablation_table(const AblationResult& result);
// One JSON object per run followed by one per summary row.
std::string ablation_jsonl(const AblationResult& result);

double median(std::vector<double> values);

}  // namespace shpjf
