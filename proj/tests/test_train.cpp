#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "shpjf/errors.hpp"
#include "shpjf/train.hpp"

using namespace shpjf;
using namespace shpjf::testing;

namespace {

struct SmallWorld {
  Dataset data;
  Split split;
  std::unique_ptr<Corpus> corpus;

  explicit SmallWorld(std::uint64_t seed = 4) {
    GeneratorConfig g;
    g.users = 60;
    g.jobs = 120;
    g.positives = 240;
    g.vocab_terms = 200;
    g.categories = 5;
    g.terms_per_category = 20;
    g.mean_history = 6;
    g.jd_min_tokens = 4;
    g.jd_max_tokens = 6;
    data = generate_synthetic(g, seed).data;
    split = temporal_split(data.interactions, 1, 1, g.days);
    corpus = std::make_unique<Corpus>(data, split.val_start, 3);
  }

  ShpjfModel model(Variant variant = Variant::full, std::uint64_t seed = 1) const {
    return ShpjfModel(micro_config(variant), data.vocab.size(), data.candidates.size(), data.jobs.size(), seed);
  }
};

TrainConfig quick_config() {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.batch_size = 4;
  c.max_epochs = 20;
  c.patience = 3;
  c.seed = 7;
  return c;
}

std::vector<InteractionRecord> first_impressions(std::span<const InteractionRecord> records, std::size_t groups) {
  std::vector<InteractionRecord> out;
  std::set<std::int64_t> seen;
  for (const auto& r : records) {
    if (!seen.count(r.impression_id) && seen.size() == groups) continue;
    seen.insert(r.impression_id);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Corpus, GroupsFollowImpressions) {
  SmallWorld w;
  const auto groups = w.corpus->groups(w.split.train);
  std::size_t pairs = 0;
  for (const auto& g : groups) {
    int positives = 0;
    for (int l : g.labels) positives += l;
    EXPECT_EQ(positives, 1);
    EXPECT_EQ(g.jobs.size(), g.labels.size());
    pairs += g.jobs.size();
  }
  EXPECT_EQ(pairs, w.split.train.size());
  for (const auto& u : w.corpus->users())
    for (const auto& h : u.history) EXPECT_LT(h.ts, w.split.val_start);

  std::vector<InteractionRecord> mixed{{0, 1, 1, 5, 0}, {1, 2, 0, 5, 0}};
  EXPECT_THROW(w.corpus->groups(mixed), ValidationError);
}

TEST(Train, MicroDatasetLossDecreases) {
  SmallWorld w;
  const auto micro = first_impressions(w.split.train, 6);
  ASSERT_GE(micro.size(), 45u);
  ASSERT_LE(micro.size(), 60u);
  auto model = w.model();
  auto cfg = quick_config();
  cfg.patience = 100;
  const auto result = train(model, *w.corpus, micro, w.split.val, cfg);
  ASSERT_EQ(result.log.size(), 20u);
  EXPECT_LT(result.log.back().train_loss, result.log.front().train_loss);
}

TEST(Train, StopsPatienceEpochsAfterBest) {
  SmallWorld w;
  auto model = w.model();
  auto cfg = quick_config();
  cfg.max_epochs = 40;
  cfg.patience = 2;
  const auto result = train(model, *w.corpus, w.split.train, w.split.val, cfg);
  ASSERT_LT(result.log.size(), cfg.max_epochs) << "early stopping never triggered";
  EXPECT_EQ(result.log.size(), result.best_epoch + cfg.patience);
}

TEST(Train, SameSeedReplaysLossCurve) {
  SmallWorld w;
  auto cfg = quick_config();
  cfg.max_epochs = 4;
  auto a = w.model(), b = w.model();
  const auto ra = train(a, *w.corpus, w.split.train, w.split.val, cfg);
  const auto rb = train(b, *w.corpus, w.split.train, w.split.val, cfg);
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_EQ(ra.log[i].train_loss, rb.log[i].train_loss);
    EXPECT_EQ(ra.log[i].val_gauc, rb.log[i].val_gauc);
  }
}

TEST(Train, KeepsBestValidationCheckpoint) {
  SmallWorld w;
  auto model = w.model();
  auto cfg = quick_config();
  cfg.max_epochs = 8;
  const auto result = train(model, *w.corpus, w.split.train, w.split.val, cfg);
  for (const auto& e : result.log) EXPECT_LE(e.val_gauc, result.best_val_gauc);
  EXPECT_EQ(result.log.at(result.best_epoch - 1).val_gauc, result.best_val_gauc);
  EXPECT_EQ(evaluate(model, *w.corpus, w.split.val).gauc, result.best_val_gauc);
}

TEST(Train, NanLossAbortsWithBatchDump) {
  SmallWorld w;
  auto model = w.model();
  model.prediction_mlp_.biases.back().mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  auto cfg = quick_config();
  cfg.diagnostics_dir = std::filesystem::temp_directory_path() / "shpjf_test_nan";
  std::filesystem::remove_all(cfg.diagnostics_dir);
  try {
    train(model, *w.corpus, w.split.train, w.split.val, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::is_empty(cfg.diagnostics_dir));
  std::filesystem::remove_all(cfg.diagnostics_dir);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.learning_rate = 0.05;
  EXPECT_THROW(c.validate(), ConfigError);
  c.learning_rate = 0.00001;
  c.patience = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Evaluate, ScoresMatchModelAndReportInRange) {
  SmallWorld w;
  const auto model = w.model();
  const auto scored = score_interactions(model, *w.corpus, w.split.test);
  ASSERT_EQ(scored.size(), w.split.test.size());
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& r = w.split.test[i];
    EXPECT_NEAR(scored[i].score, model.score_pair(w.corpus->user(r.user_id), w.corpus->job(r.job_id)).y_hat, 1e-12);
  }
  const auto report = evaluate(model, *w.corpus, w.split.test);
  for (double m : {report.gauc, report.recall_at_1, report.recall_at_5, report.mrr}) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(Ablation, SingleVariantGivesSingleRow) {
  SmallWorld w;
  auto cfg = quick_config();
  cfg.max_epochs = 2;
  AblationConfig ablation;
  ablation.variants = {Variant::full};
  ablation.seeds = {1};
  ablation.horizon_days = 10;
  const auto result = run_ablation(w.data, micro_config(), cfg, ablation);
  ASSERT_EQ(result.rows.size(), 1u);
  ASSERT_EQ(result.runs.size(), 1u);
  EXPECT_EQ(result.rows[0].variant, Variant::full);
  EXPECT_EQ(result.rows[0].gauc, result.runs[0].test.gauc);
  const auto table = format_ablation_table(result);
  EXPECT_NE(table.find("full"), std::string::npos);
  std::istringstream lines(ablation_jsonl(result));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) count += !line.empty();
  EXPECT_EQ(count, 2u);
}

TEST(Ablation, MedianOfSeeds) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0}), 2.5);
}
