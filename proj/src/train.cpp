#include "shpjf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"
#include "shpjf/errors.hpp"
#include "shpjf/optim.hpp"

namespace shpjf {

Corpus::Corpus(const Dataset& data, Timestamp history_cutoff, std::size_t max_history)
    : users_(make_user_views(data, history_cutoff, max_history)), jobs_(make_job_views(data)) {}

const UserView& Corpus::user(UserId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= users_.size()) throw LookupError("unknown user id " + std::to_string(id));
  return users_[static_cast<std::size_t>(id)];
}

const JobView& Corpus::job(JobId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= jobs_.size()) throw LookupError("unknown job id " + std::to_string(id));
  return jobs_[static_cast<std::size_t>(id)];
}

std::vector<ScoringGroup> Corpus::groups(std::span<const InteractionRecord> interactions) const {
  std::vector<ScoringGroup> out;
  std::unordered_map<std::int64_t, std::size_t> index;
  for (const auto& r : interactions) {
    auto [it, inserted] = index.emplace(r.impression_id, out.size());
    if (inserted) {
      out.emplace_back();
      out.back().user = &user(r.user_id);
    } else if (out[it->second].user->user_id != r.user_id) {
      throw ValidationError("impression " + std::to_string(r.impression_id) + " mixes users");
    }
    auto& g = out[it->second];
    g.jobs.push_back(&job(r.job_id));
    g.labels.push_back(r.label);
  }
  return out;
}

void TrainConfig::validate() const {
  constexpr double allowed[] = {0.01, 0.001, 0.00001};
  if (std::find(std::begin(allowed), std::end(allowed), learning_rate) == std::end(allowed)) {
    throw ConfigError("learning rate must be one of 0.01, 0.001, 0.00001");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be at least 1");
}

namespace {

// Tape buffers of a few megabytes are freed and reallocated every step. With
// glibc's default thresholds each one is a fresh mmap whose pages fault in
// again, which costs about a third of the training time.
void keep_large_buffers() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const ShpjfModel& model) {
  Snapshot out;
  for (const auto& t : model.parameters()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

void restore(ShpjfModel& model, const Snapshot& saved) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(saved[i].begin(), saved[i].end(), params[i].mutable_values().begin());
  }
}

std::string describe_batch(std::span<const ScoringGroup> batch, double loss) {
  nlohmann::ordered_json dump;
  dump["loss"] = std::isnan(loss) ? "nan" : std::to_string(loss);
  auto& groups = dump["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : batch) {
    nlohmann::ordered_json entry;
    entry["user_id"] = g.user->user_id;
    entry["history"] = g.user->history.size();
    auto& jobs = entry["job_ids"] = nlohmann::ordered_json::array();
    for (const auto* j : g.jobs) jobs.push_back(j->job_id);
    entry["labels"] = g.labels;
    groups.push_back(entry);
  }
  return dump.dump();
}

[[noreturn]] void abort_on_nan(std::span<const ScoringGroup> batch, double loss, std::size_t epoch,
                               const TrainConfig& config) {
  const auto text = describe_batch(batch, loss);
  std::string where = text;
  if (!config.diagnostics_dir.empty()) {
    std::filesystem::create_directories(config.diagnostics_dir);
    const auto path = config.diagnostics_dir / ("nan_batch_epoch" + std::to_string(epoch) + ".json");
    std::ofstream(path) << text << '\n';
    where = path.string();
  }
  throw TrainingError("non-finite training loss in epoch " + std::to_string(epoch) + "; batch dump: " + where);
}

}  // namespace

std::vector<ScoredInteraction> score_interactions(const ShpjfModel& model, const Corpus& corpus,
                                                  std::span<const InteractionRecord> interactions) {
  auto groups = corpus.groups(interactions);
  std::map<UserId, IntentionState> states;
  if (model.config().uses_intention()) {
    for (auto& g : groups) {
      auto it = states.find(g.user->user_id);
      if (it == states.end()) it = states.emplace(g.user->user_id, model.intention_state(*g.user)).first;
      g.state = &it->second;
    }
  }
  std::vector<double> scores;
  scores.reserve(interactions.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < groups.size(); i += kChunk) {
    const auto chunk = std::span<const ScoringGroup>(groups).subspan(i, std::min(kChunk, groups.size() - i));
    const auto probs = model.forward(chunk);
    scores.insert(scores.end(), probs.values().begin(), probs.values().end());
  }
  // Scores come out grouped by impression; map them back onto interactions.
  std::unordered_map<std::int64_t, std::size_t> next;
  std::size_t offset = 0;
  for (const auto& r : interactions) {
    if (next.count(r.impression_id) == 0) {
      next[r.impression_id] = offset;
      offset += groups[next.size() - 1].jobs.size();
    }
  }
  std::vector<ScoredInteraction> out;
  out.reserve(interactions.size());
  for (const auto& r : interactions) {
    out.push_back({r.user_id, r.job_id, r.impression_id, r.label, scores[next[r.impression_id]++]});
  }
  return out;
}

EvalReport evaluate(const ShpjfModel& model, const Corpus& corpus, std::span<const InteractionRecord> interactions,
                    GaucWeighting weighting) {
  const auto scored = score_interactions(model, corpus, interactions);
  return compute_report(scored, weighting);
}

TrainResult train(ShpjfModel& model, const Corpus& corpus, std::span<const InteractionRecord> train_set,
                  std::span<const InteractionRecord> val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  keep_large_buffers();
  if (train_set.empty()) throw ValidationError("empty training split");
  if (val_set.empty()) throw ValidationError("empty validation split");
  const auto groups = corpus.groups(train_set);
  std::mt19937_64 rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  auto params = model.parameters();
  AdamState adam(params, config.learning_rate);
  ForwardContext ctx{true, model.config().dropout, &dropout_rng};

  TrainResult result;
  result.best_val_gauc = -1.0;
  Snapshot best;
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  const auto start = std::chrono::steady_clock::now();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t pairs = 0;
    std::vector<ScoringGroup> batch;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      batch.clear();
      std::size_t batch_pairs = 0;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        batch.push_back(groups[order[i]]);
        batch_pairs += batch.back().jobs.size();
      }
      for (auto& p : params) p.zero_grad();
      Tape tape;
      double loss_value;
      {
        Tape::Scope scope(tape);
        const auto loss = model.batch_loss(batch, ctx);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) abort_on_nan(batch, loss_value, epoch, config);
        tape.backward(loss);
      }
      adam_step(params, adam);
      loss_sum += loss_value;
      pairs += batch_pairs;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(pairs);
    entry.val_gauc = evaluate(model, corpus, val_set, config.weighting).gauc;
    entry.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.val_gauc > result.best_val_gauc) {
      result.best_val_gauc = entry.val_gauc;
      result.best_epoch = epoch;
      best = snapshot(model);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  restore(model, best);
  return result;
}

std::string format_epoch_log(const EpochLog& entry) {
  std::ostringstream out;
  out << entry.epoch << '\t' << std::setprecision(10) << entry.train_loss << '\t' << entry.val_gauc << '\t'
      << std::fixed << std::setprecision(3) << entry.elapsed_seconds;
  return out.str();
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw EvaluationError("median of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationResult run_ablation(const Dataset& data, const ModelConfig& model_config, const TrainConfig& train_config,
                            const AblationConfig& ablation, const RunCallback& on_run) {
  if (ablation.variants.empty()) throw ConfigError("ablation needs at least one variant");
  if (ablation.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const auto split = temporal_split(data.interactions, ablation.val_days, ablation.test_days, ablation.horizon_days);
  const Corpus corpus(data, split.val_start, model_config.max_history);
  AblationResult result;
  for (auto variant : ablation.variants) {
    std::vector<double> g, r1, r5, m;
    for (auto seed : ablation.seeds) {
      auto cfg = model_config;
      cfg.variant = variant;
      ShpjfModel model(cfg, data.vocab.size(), data.candidates.size(), data.jobs.size(), seed);
      auto tc = train_config;
      tc.seed = seed;
      const auto start = std::chrono::steady_clock::now();
      const auto trained = train(model, corpus, split.train, split.val, tc);
      AblationRun run;
      run.variant = variant;
      run.seed = seed;
      run.best_val_gauc = trained.best_val_gauc;
      run.best_epoch = trained.best_epoch;
      run.epochs = trained.log.size();
      run.test = evaluate(model, corpus, split.test, tc.weighting);
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (on_run) on_run(run);
      g.push_back(run.test.gauc);
      r1.push_back(run.test.recall_at_1);
      r5.push_back(run.test.recall_at_5);
      m.push_back(run.test.mrr);
      result.runs.push_back(std::move(run));
    }
    result.rows.push_back({variant, median(g), median(r1), median(r5), median(m)});
  }
  return result;
}

std::string format_ablation_table(const AblationResult& result) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "variant" << std::right << std::setw(9) << "GAUC" << std::setw(9) << "R@1"
      << std::setw(9) << "R@5" << std::setw(9) << "MRR" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& row : result.rows) {
    out << std::left << std::setw(12) << to_string(row.variant) << std::right << std::setw(9) << row.gauc
        << std::setw(9) << row.recall_at_1 << std::setw(9) << row.recall_at_5 << std::setw(9) << row.mrr << '\n';
  }
  return out.str();
}

std::string ablation_jsonl(const AblationResult& result) {
  std::ostringstream out;
  for (const auto& run : result.runs) {
    nlohmann::ordered_json j;
    j["kind"] = "run";
    j["variant"] = to_string(run.variant);
    j["seed"] = run.seed;
    j["best_val_gauc"] = run.best_val_gauc;
    j["best_epoch"] = run.best_epoch;
    j["epochs"] = run.epochs;
    j["gauc"] = run.test.gauc;
    j["recall_at_1"] = run.test.recall_at_1;
    j["recall_at_5"] = run.test.recall_at_5;
    j["mrr"] = run.test.mrr;
    j["skipped_users"] = run.test.skipped_users;
    out << j.dump() << '\n';
  }
  for (const auto& row : result.rows) {
    nlohmann::ordered_json j;
    j["kind"] = "median";
    j["variant"] = to_string(row.variant);
    j["gauc"] = row.gauc;
    j["recall_at_1"] = row.recall_at_1;
    j["recall_at_5"] = row.recall_at_5;
    j["mrr"] = row.mrr;
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace shpjf
