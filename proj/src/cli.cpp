#include "shpjf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "shpjf/data.hpp"
#include "shpjf/errors.hpp"
#include "shpjf/model.hpp"
#include "shpjf/serving.hpp"
#include "shpjf/train.hpp"

namespace shpjf::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot checksum " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every option of a subcommand with its effective value (defaults included).
Json resolved_options(const CLI::App& app) {
  Json config = Json::object();
  for (const auto* opt : app.get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->get_type_size() == 0) {
      config[name] = opt->count() > 0;
      continue;
    }
    if (opt->count() > 0) {
      const auto values = opt->results();
      if (opt->get_expected_max() > 1) {
        config[name] = values;
      } else {
        config[name] = values.empty() ? "" : values.back();
      }
    } else {
      config[name] = opt->get_default_str();
    }
  }
  return config;
}

/// Collects run metadata and writes manifest.json atomically at the end.
class Manifest {
 public:
  Manifest(std::string subcommand, const CLI::App& app, std::uint64_t seed)
      : subcommand_(std::move(subcommand)), config_(resolved_options(app)), seed_(seed), started_(utc_now()) {}

  void input(const fs::path& path) {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_regular_file() && e.path().filename() != kManifestFile) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) inputs_[f.string()] = file_checksum(f);
    } else {
      inputs_[path.string()] = file_checksum(path);
    }
  }
  void output(const fs::path& path) { outputs_[path.filename().string()] = file_checksum(path); }
  // Outputs whose bytes legitimately vary between runs (wall-clock columns).
  void unchecked(const fs::path& path, const std::string& reason) { unchecked_[path.filename().string()] = reason; }
  void note(const std::string& key, Json value) { extra_[key] = std::move(value); }

  void write(const fs::path& dir) const {
    Json j;
    j["subcommand"] = subcommand_;
    j["seed"] = seed_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!unchecked_.empty()) j["unchecked_outputs"] = unchecked_;
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    j["checksum"] = "fnv1a64";
    j["started_at"] = started_;
    j["finished_at"] = utc_now();
    const auto tmp = dir / (std::string(kManifestFile) + ".tmp");
    {
      std::ofstream out(tmp);
      out << j.dump(2) << '\n';
      if (!out) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, dir / kManifestFile);
  }

 private:
  std::string subcommand_;
  Json config_;
  std::uint64_t seed_;
  std::string started_;
  std::map<std::string, std::string> inputs_, outputs_, unchecked_;
  Json extra_ = Json::object();
};

fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("--out must name a directory");
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Flag groups

struct ModelFlags {
  ModelConfig config;
  std::string variant = "full";
  std::string axis = "clusters";
  std::string values = "cj_prime";

  void add(CLI::App* app) {
    app->add_option("--variant", variant, "Model variant")
        ->check(CLI::IsMember({"full", "no_q", "no_j", "no_c", "text_only"}));
    app->add_option("--lambda", config.lambda, "Weight of the job-ID intention in the fusion");
    app->add_option("--clusters", config.clusters, "Number of intention clusters k");
    app->add_option("--heads", config.heads, "Attention heads over intention clusters");
    app->add_option("--id-dim", config.id_dim, "User/job ID embedding width");
    app->add_option("--word-dim", config.word_dim, "Word embedding and text encoder width");
    app->add_option("--dropout", config.dropout, "Dropout rate during training");
    app->add_option("--max-history", config.max_history, "Most recent search entries kept per user");
    app->add_option("--encoder-layers", config.encoder_layers, "Text encoder layers");
    app->add_option("--encoder-heads", config.encoder_heads, "Text encoder attention heads");
    app->add_option("--encoder-ff", config.encoder_ff, "Text encoder feed-forward width");
    app->add_option("--max-tokens", config.max_tokens, "Joint resume + description token budget");
    app->add_option("--intention-hidden", config.intention_hidden, "Hidden width of the intention MLP");
    app->add_option("--intention-out", config.intention_out, "Output width of the intention MLP");
    app->add_option("--prediction-hidden", config.prediction_hidden, "Hidden width of the prediction MLP");
    app->add_option("--cluster-softmax-axis", axis, "Softmax axis of the cluster assignment")
        ->check(CLI::IsMember({"clusters", "history"}));
    app->add_option("--query-values", values, "Values read by the query-side attention")
        ->check(CLI::IsMember({"cj_prime", "cj"}));
  }

  ModelConfig resolve() {
    config.variant = parse_variant(variant);
    config.cluster_axis = parse_cluster_axis(axis);
    config.query_values = parse_query_values(values);
    config.validate();
    return config;
  }
};

struct TrainFlags {
  TrainConfig config;
  std::size_t val_days = 1, test_days = 1, horizon_days = 0;
  std::string weighting = "unweighted";

  void add(CLI::App* app) {
    app->add_option("--lr", config.learning_rate, "Adam learning rate (0.01, 0.001 or 0.00001)");
    app->add_option("--batch-size", config.batch_size, "Impressions per optimizer step");
    app->add_option("--max-epochs", config.max_epochs, "Upper bound on training epochs");
    app->add_option("--patience", config.patience, "Epochs without validation gain before stopping");
    add_split(app);
    app->add_option("--gauc-weighting", weighting, "Per-user weighting in GAUC")
        ->check(CLI::IsMember({"unweighted", "impressions"}));
  }
  void add_split(CLI::App* app) {
    app->add_option("--val-days", val_days, "Days held out for validation");
    app->add_option("--test-days", test_days, "Days held out for testing");
    app->add_option("--horizon-days", horizon_days, "Length of the log in days (0 infers it)");
  }

  TrainConfig resolve(std::uint64_t seed) {
    config.seed = seed;
    config.weighting = weighting == "impressions" ? GaucWeighting::impressions : GaucWeighting::unweighted;
    config.validate();
    return config;
  }
};

void add_data_dir(CLI::App* app, std::string& dir) {
  app->add_option("--data-dir", dir, "Dataset directory (environment SHPJF_DATA_ROOT overrides the default)")
      ->envname("SHPJF_DATA_ROOT");
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

std::string report_text(const EvalReport& r) {
  std::ostringstream out;
  out << "GAUC   " << fmt(r.gauc) << '\n'
      << "R@1    " << fmt(r.recall_at_1) << '\n'
      << "R@5    " << fmt(r.recall_at_5) << '\n'
      << "MRR    " << fmt(r.mrr) << '\n'
      << "users  " << r.per_user_auc.size() << " (skipped " << r.skipped_users << ")\n"
      << "impressions " << r.impressions << '\n';
  return out.str();
}

Json report_json(const EvalReport& r) {
  Json j;
  j["gauc"] = r.gauc;
  j["recall_at_1"] = r.recall_at_1;
  j["recall_at_5"] = r.recall_at_5;
  j["mrr"] = r.mrr;
  j["users"] = r.per_user_auc.size();
  j["skipped_users"] = r.skipped_users;
  j["impressions"] = r.impressions;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenerateCmd {
  GeneratorConfig config;
  std::string config_file, out = "data";
  std::uint64_t seed = 1;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("generate", "Write a synthetic recruitment log");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--out", out, "Output dataset directory")->envname("SHPJF_DATA_ROOT");
    app->add_option("--config", config_file, "Generator settings file (key = value); flags override it");
    app->add_option("--users", config.users, "Candidates");
    app->add_option("--jobs", config.jobs, "Jobs");
    app->add_option("--positives", config.positives, "Positive interactions");
    app->add_option("--vocab-terms", config.vocab_terms, "Vocabulary terms");
    app->add_option("--categories", config.categories, "Latent job categories");
    app->add_option("--terms-per-category", config.terms_per_category, "Terms owned by each category");
    app->add_option("--days", config.days, "Days spanned by the log");
    app->add_option("--mean-history", config.mean_history, "Mean search history length over all users");
    app->add_option("--zero-history-fraction", config.zero_history_fraction, "Users without search history");
    app->add_option("--intention-strength", config.intention_strength,
                    "Probability that history and positives follow the user's intentions");
    app->add_option("--uninformative-resume-fraction", config.uninformative_resume_fraction,
                    "Users with short generic resumes");
    app->add_option("--min-intentions", config.min_intentions, "Fewest intention categories per user");
    app->add_option("--max-intentions", config.max_intentions, "Most intention categories per user");
    app->add_option("--negatives-per-positive", config.negatives_per_positive, "Negatives sampled per positive");
    app->add_option("--exposure-size", config.exposure_size, "Jobs co-exposed with each positive");
    app->add_option("--jd-min-tokens", config.jd_min_tokens, "Shortest job description");
    app->add_option("--jd-max-tokens", config.jd_max_tokens, "Longest job description");
    app->add_option("--jd-category-share", config.jd_category_share, "Share of category terms in descriptions");
    app->callback([this, app] { cmd = app; });
  }

  int run(std::ostream& log) {
    auto cfg = config;
    if (!config_file.empty()) {
      // Start from the file; flags given explicitly override its entries.
      std::string text = GeneratorConfig::load(config_file).to_text();
      for (const auto* opt : cmd->get_options()) {
        if (opt->count() == 0 || opt->get_type_size() == 0) continue;
        auto key = opt->get_single_name();
        std::replace(key.begin(), key.end(), '-', '_');
        const auto at = text.find(key + " = ");
        if (at == std::string::npos || (at > 0 && text[at - 1] != '\n')) continue;
        const auto end = text.find('\n', at);
        text.replace(at, end - at, key + " = " + opt->results().back());
      }
      cfg = GeneratorConfig::parse(text);
    }
    cfg.validate();
    const auto dir = prepare_out_dir(out);
    Manifest manifest("generate", *cmd, seed);
    if (!config_file.empty()) manifest.input(config_file);
    const auto gen = generate_synthetic(cfg, seed);
    save_dataset(gen.data, dir);
    write_text(dir / "generator.cfg", cfg.to_text());
    for (const char* f : {kVocabFile, kCandidatesFile, kJobsFile, kInteractionsFile, "generator.cfg"}) {
      manifest.output(dir / f);
    }
    const auto stats = dataset_stats(gen.data);
    Json s;
    s["candidates"] = stats.candidates;
    s["jobs"] = stats.jobs;
    s["positives"] = stats.positives;
    s["negatives"] = stats.negatives;
    s["mean_history"] = stats.mean_history;
    s["mean_query_words"] = stats.mean_query_words;
    manifest.note("stats", s);
    manifest.write(dir);
    log << "wrote " << stats.candidates << " candidates, " << stats.jobs << " jobs, " << stats.positives
        << " positives, " << stats.negatives << " negatives to " << dir.string() << '\n'
        << "mean history " << fmt(stats.mean_history, 2) << ", mean query words " << fmt(stats.mean_query_words, 2)
        << '\n';
    return kExitOk;
  }

  CLI::App* cmd = nullptr;
};

struct TrainCmd {
  ModelFlags model;
  TrainFlags train;
  std::string data_dir = "data", out = "run";
  std::uint64_t seed = 1;
  CLI::App* cmd = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "Train a model with early stopping on validation GAUC");
    add_data_dir(app, data_dir);
    app->add_option("--out", out, "Run directory for the checkpoint and training log");
    app->add_option("--seed", seed, "Seed for initialization, shuffling and dropout");
    model.add(app);
    train.add(app);
    app->callback([this, app] { cmd = app; });
  }

  int run(std::ostream& log) {
    const auto mc = model.resolve();
    const auto tc = train.resolve(seed);
    const auto data = load_dataset(data_dir);
    const auto dir = prepare_out_dir(out);
    Manifest manifest("train", *cmd, seed);
    manifest.input(data_dir);
    const auto split = temporal_split(data.interactions, train.val_days, train.test_days, train.horizon_days);
    const Corpus corpus(data, split.val_start, mc.max_history);
    ShpjfModel net(mc, data.vocab.size(), data.candidates.size(), data.jobs.size(), seed);
    std::ofstream tsv(dir / "train_log.tsv");
    tsv << "epoch\ttrain_loss\tval_gauc\telapsed_seconds\n";
    const auto result = shpjf::train(net, corpus, split.train, split.val, tc, [&](const EpochLog& e) {
      tsv << format_epoch_log(e) << '\n' << std::flush;
      log << "epoch " << e.epoch << "  loss " << fmt(e.train_loss, 5) << "  val GAUC " << fmt(e.val_gauc) << "  "
          << fmt(e.elapsed_seconds, 1) << "s\n";
    });
    tsv.close();
    net.save(dir / "model.ckpt");
    Json summary;
    summary["best_epoch"] = result.best_epoch;
    summary["best_val_gauc"] = result.best_val_gauc;
    summary["epochs"] = result.log.size();
    Json losses = Json::array(), gaucs = Json::array();
    for (const auto& e : result.log) {
      losses.push_back(e.train_loss);
      gaucs.push_back(e.val_gauc);
    }
    summary["train_loss"] = losses;
    summary["val_gauc"] = gaucs;
    write_text(dir / "train_summary.json", summary.dump(2) + "\n");
    manifest.output(dir / "model.ckpt");
    manifest.output(dir / "train_summary.json");
    manifest.unchecked(dir / "train_log.tsv", "elapsed_seconds column is wall-clock time");
    manifest.write(dir);
    log << "best epoch " << result.best_epoch << " (val GAUC " << fmt(result.best_val_gauc) << "); checkpoint "
        << (dir / "model.ckpt").string() << '\n';
    return kExitOk;
  }
};

struct EvaluateCmd {
  TrainFlags split_flags;
  std::string checkpoint, data_dir = "data", out = "eval", split = "test", weighting = "unweighted";
  CLI::App* cmd = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("evaluate", "Score a split with a trained checkpoint");
    app->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    add_data_dir(app, data_dir);
    app->add_option("--out", out, "Report directory");
    app->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"val", "test"}));
    split_flags.add_split(app);
    app->add_option("--gauc-weighting", weighting, "Per-user weighting in GAUC")
        ->check(CLI::IsMember({"unweighted", "impressions"}));
    app->callback([this, app] { cmd = app; });
  }

  int run(std::ostream& log) {
    const auto net = ShpjfModel::load(checkpoint);
    const auto data = load_dataset(data_dir);
    const auto dir = prepare_out_dir(out);
    Manifest manifest("evaluate", *cmd, 0);
    manifest.input(checkpoint);
    manifest.input(data_dir);
    const auto s = temporal_split(data.interactions, split_flags.val_days, split_flags.test_days,
                                  split_flags.horizon_days);
    const Corpus corpus(data, s.val_start, net.config().max_history);
    const auto& rows = split == "val" ? s.val : s.test;
    const auto w = weighting == "impressions" ? GaucWeighting::impressions : GaucWeighting::unweighted;
    const auto scored = score_interactions(net, corpus, rows);
    const auto report = compute_report(scored, w);
    write_text(dir / "report.txt", report_text(report));
    std::ostringstream jsonl;
    {
      Json j = report_json(report);
      j["kind"] = "summary";
      j["split"] = split;
      jsonl << j.dump() << '\n';
    }
    for (const auto& [user, auc] : report.per_user_auc) {
      Json j;
      j["kind"] = "user";
      j["user_id"] = user;
      j["auc"] = auc;
      jsonl << j.dump() << '\n';
    }
    write_text(dir / "report.jsonl", jsonl.str());
    std::ostringstream scores;
    scores << "user_id\tjob_id\timpression_id\tlabel\tscore\n" << std::setprecision(17);
    for (const auto& e : scored) {
      scores << e.user_id << '\t' << e.job_id << '\t' << e.impression_id << '\t' << e.label << '\t' << e.score << '\n';
    }
    write_text(dir / "scores.tsv", scores.str());
    for (const char* f : {"report.txt", "report.jsonl", "scores.tsv"}) manifest.output(dir / f);
    manifest.write(dir);
    log << report_text(report);
    return kExitOk;
  }
};

struct AblateCmd {
  ModelFlags model;
  TrainFlags train;
  std::string data_dir = "data", out = "ablation";
  std::vector<std::string> variants{"text_only", "no_q", "no_j", "no_c", "full"};
  std::vector<std::uint64_t> seeds{1};
  CLI::App* cmd = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("ablate", "Train and compare model variants on one split");
    add_data_dir(app, data_dir);
    app->add_option("--out", out, "Output directory for the comparison table");
    app->add_option("--variants", variants, "Variants to train")
        ->check(CLI::IsMember({"full", "no_q", "no_j", "no_c", "text_only"}))
        ->delimiter(',');
    app->add_option("--seeds", seeds, "Seeds; each variant trains once per seed")->delimiter(',');
    model.add(app);
    train.add(app);
    app->callback([this, app] { cmd = app; });
  }

  int run(std::ostream& log) {
    const auto mc = model.resolve();
    const auto tc = train.resolve(seeds.empty() ? 1 : seeds.front());
    AblationConfig ac;
    ac.variants.clear();
    for (const auto& v : variants) ac.variants.push_back(parse_variant(v));
    ac.seeds = seeds;
    ac.val_days = train.val_days;
    ac.test_days = train.test_days;
    ac.horizon_days = train.horizon_days;
    const auto data = load_dataset(data_dir);
    const auto dir = prepare_out_dir(out);
    Manifest manifest("ablate", *cmd, ac.seeds.front());
    manifest.input(data_dir);
    const auto result = run_ablation(data, mc, tc, ac, [&](const AblationRun& r) {
      log << to_string(r.variant) << " seed " << r.seed << ": test GAUC " << fmt(r.test.gauc) << " (best epoch "
          << r.best_epoch << ", " << fmt(r.seconds, 1) << "s)\n";
    });
    const auto table = format_ablation_table(result);
    write_text(dir / "ablation.txt", table);
    write_text(dir / "ablation.jsonl", ablation_jsonl(result));
    manifest.output(dir / "ablation.txt");
    manifest.output(dir / "ablation.jsonl");
    manifest.write(dir);
    log << table;
    return kExitOk;
  }
};

struct GradcheckCmd {
  bool micro = false;
  double step = 1e-5, tolerance = 1e-3;
  std::uint64_t seed = 11;
  CLI::App* cmd = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    app->add_flag("--micro", micro, "Check the full model on the two-user micro configuration");
    app->add_option("--step", step, "Finite-difference step");
    app->add_option("--tolerance", tolerance, "Largest accepted relative error");
    app->add_option("--seed", seed, "Seed of the micro model and its inputs");
    app->callback([this, app] { cmd = app; });
  }

  int run(std::ostream& log, std::ostream& err) {
    if (!micro) {
      err << "gradcheck: pass --micro to run the full-model check\n" << cmd->help();
      return kExitValidation;
    }
    const auto start = std::chrono::steady_clock::now();
    const double error = micro_grad_check(step, seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << "max relative error " << std::scientific << std::setprecision(3) << error << std::defaultfloat
        << " (tolerance " << tolerance << ", " << fmt(seconds, 2) << "s)\n";
    return error < tolerance ? kExitOk : kExitRuntime;
  }
};

struct ServeSimCmd {
  TrainFlags split_flags;
  std::string checkpoint, data_dir = "data", out = "serve";
  std::int64_t refresh_interval = 6 * 3600;
  std::size_t sessions = 200;
  CLI::App* cmd = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("serve-sim", "Replay test impressions through the cached serving path");
    app->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    add_data_dir(app, data_dir);
    app->add_option("--out", out, "Output directory for scores and the cache dump");
    app->add_option("--refresh-interval", refresh_interval, "Seconds between cache refreshes");
    app->add_option("--sessions", sessions, "Impressions to replay (0 replays all)");
    split_flags.add_split(app);
    app->callback([this, app] { cmd = app; });
  }

  int run(std::ostream& log) {
    if (refresh_interval <= 0) throw ValidationError("--refresh-interval must be positive");
    const auto net = ShpjfModel::load(checkpoint);
    const auto data = load_dataset(data_dir);
    const auto dir = prepare_out_dir(out);
    Manifest manifest("serve-sim", *cmd, 0);
    manifest.input(checkpoint);
    manifest.input(data_dir);
    const auto split = temporal_split(data.interactions, split_flags.val_days, split_flags.test_days,
                                      split_flags.horizon_days);
    // Impressions replayed in time order.
    std::map<std::int64_t, std::vector<const InteractionRecord*>> by_impression;
    for (const auto& r : split.test) by_impression[r.impression_id].push_back(&r);
    std::vector<std::vector<const InteractionRecord*>> sessions_list;
    for (auto& [id, rows] : by_impression) sessions_list.push_back(std::move(rows));
    std::stable_sort(sessions_list.begin(), sessions_list.end(),
                     [](const auto& a, const auto& b) { return a.front()->ts < b.front()->ts; });
    if (sessions > 0 && sessions_list.size() > sessions) sessions_list.resize(sessions);
    if (sessions_list.empty()) throw ValidationError("no test impressions to replay");

    const auto jobs = make_job_views(data);
    IntentionCache cache(refresh_interval);
    std::vector<UserView> views;
    std::size_t refreshes = 0;
    double max_gap = 0.0;
    std::uint64_t total_ops = 0;
    std::vector<ScoredInteraction> scored;
    std::ostringstream jsonl;
    jsonl << std::setprecision(17);
    for (const auto& rows : sessions_list) {
      const auto now = rows.front()->ts;
      if (net.config().uses_intention() && cache.due(now)) {
        views = make_user_views(data, now, net.config().max_history);
        cache.refresh(net, views, now);
        ++refreshes;
      }
      if (views.empty()) views = make_user_views(data, now, net.config().max_history);
      const auto& user = views.at(static_cast<std::size_t>(rows.front()->user_id));
      std::vector<JobView> impression;
      for (const auto* r : rows) impression.push_back(jobs.at(static_cast<std::size_t>(r->job_id)));
      reset_op_count();
      const auto online = score_online(net, user, impression, cache);
      total_ops += op_count();
      const auto full = net.score_group(user, impression);
      for (const auto& f : full) {
        for (const auto& o : online.ranked) {
          if (o.job_id == f.job_id) max_gap = std::max(max_gap, std::abs(o.y_hat - f.y_hat));
        }
      }
      Json j;
      j["impression_id"] = rows.front()->impression_id;
      j["user_id"] = user.user_id;
      j["ts"] = now;
      j["generation"] = online.generation;
      j["cache_hit"] = online.cache_hit;
      auto& ranked = j["ranked"] = Json::array();
      for (const auto& p : online.ranked) ranked.push_back({{"job_id", p.job_id}, {"y_hat", p.y_hat}});
      jsonl << j.dump() << '\n';
      for (const auto* r : rows) {
        for (const auto& p : online.ranked) {
          if (p.job_id == r->job_id) scored.push_back({r->user_id, r->job_id, r->impression_id, r->label, p.y_hat});
        }
      }
    }
    write_text(dir / "online_scores.jsonl", jsonl.str());
    manifest.output(dir / "online_scores.jsonl");
    if (net.config().uses_intention()) {
      cache.save(dir / "cache.bin");
      manifest.output(dir / "cache.bin");
    }
    Json summary;
    summary["sessions"] = sessions_list.size();
    summary["refreshes"] = refreshes;
    summary["generation"] = cache.generation();
    summary["cache_misses"] = cache.misses();
    summary["max_abs_gap_vs_full_forward"] = max_gap;
    summary["mean_ops_per_session"] = static_cast<double>(total_ops) / static_cast<double>(sessions_list.size());
    write_text(dir / "serve_summary.json", summary.dump(2) + "\n");
    manifest.output(dir / "serve_summary.json");
    manifest.write(dir);
    log << "replayed " << sessions_list.size() << " sessions, " << refreshes << " refreshes, generation "
        << cache.generation() << ", " << cache.misses() << " misses\n"
        << "max |cached - full| " << std::scientific << std::setprecision(2) << max_gap << std::defaultfloat
        << ", mean ops/session " << fmt(summary["mean_ops_per_session"].get<double>(), 0) << '\n';
    try {
      const auto report = compute_report(scored);
      log << "online GAUC " << fmt(report.gauc) << ", MRR " << fmt(report.mrr) << '\n';
    } catch (const EvaluationError&) {
      // Too few sessions for a GAUC; nothing to report.
    }
    return kExitOk;
  }
};

// Renders a metric-vs-value line chart. Values are plotted at even spacing so
// log-scaled sweeps (learning rates) stay readable.
std::string render_svg(const std::string& param, const std::vector<std::string>& labels,
                       const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 60;
  double lo = 1.0, hi = 0.0;
  for (const auto& [name, ys] : series) {
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (hi <= lo) {
    lo -= 0.05;
    hi += 0.05;
  }
  const double pad = 0.1 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto n = labels.size();
  auto x_at = [&](std::size_t i) { return n == 1 ? L + (W - L - R) / 2 : L + (W - L - R) * i / double(n - 1); };
  auto y_at = [&](double y) { return T + (H - T - B) * (hi - y) / (hi - lo); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream svg;
  svg << std::fixed << std::setprecision(1);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">Metrics vs " << param
      << "</text>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = lo + (hi - lo) * t / 4.0;
    svg << "<text x=\"" << L - 8 << "\" y=\"" << y_at(y) + 4 << "\" text-anchor=\"end\">" << fmt(y, 3)
        << "</text>\n";
    svg << "<line x1=\"" << L << "\" y1=\"" << y_at(y) << "\" x2=\"" << W - R << "\" y2=\"" << y_at(y)
        << "\" stroke=\"#ddd\"/>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    svg << "<text x=\"" << x_at(i) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << labels[i]
        << "</text>\n";
  }
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << param
      << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& [name, ys] = series[s];
    const char* color = colors[s % 5];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) svg << x_at(i) << ',' << y_at(ys[i]) << ' ';
    svg << "\"/>\n";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      svg << "<circle cx=\"" << x_at(i) << "\" cy=\"" << y_at(ys[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    svg << "<text x=\"" << W - R + 12 << "\" y=\"" << T + 18 * (s + 1) << "\" fill=\"" << color << "\">" << name
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

struct PlotCmd {
  ModelFlags model;
  TrainFlags train;
  std::string data_dir = "data", out = "plot", param = "lambda", input;
  std::vector<std::string> values{"0", "0.2", "0.4", "0.6", "0.8", "1"};
  std::uint64_t seed = 1;
  CLI::App* cmd = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("plot", "Sweep one hyperparameter and chart the test metrics");
    add_data_dir(app, data_dir);
    app->add_option("--out", out, "Output directory for sweep.tsv and sweep.svg");
    app->add_option("--param", param, "Hyperparameter to sweep")
        ->check(CLI::IsMember({"lambda", "clusters", "heads", "max-history", "id-dim", "lr", "dropout"}));
    app->add_option("--values", values, "Values of the swept hyperparameter")->delimiter(',');
    app->add_option("--input", input, "Render an existing sweep.tsv instead of training");
    app->add_option("--seed", seed, "Seed for every point of the sweep");
    model.add(app);
    train.add(app);
    app->callback([this, app] { cmd = app; });
  }

  static void apply(const std::string& param, const std::string& value, ModelConfig& mc, TrainConfig& tc) {
    try {
      std::size_t used = 0;
      if (param == "lambda") mc.lambda = std::stod(value, &used);
      if (param == "dropout") mc.dropout = std::stod(value, &used);
      if (param == "lr") tc.learning_rate = std::stod(value, &used);
      if (param == "clusters") mc.clusters = std::stoul(value, &used);
      if (param == "heads") mc.heads = std::stoul(value, &used);
      if (param == "max-history") mc.max_history = std::stoul(value, &used);
      if (param == "id-dim") mc.id_dim = std::stoul(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::logic_error&) {
      throw ValidationError("bad value '" + value + "' for --param " + param);
    }
  }

  int run(std::ostream& log) {
    const auto dir = prepare_out_dir(out);
    Manifest manifest("plot", *cmd, seed);
    std::vector<std::string> labels;
    std::vector<std::pair<std::string, std::vector<double>>> series{
        {"val GAUC", {}}, {"test GAUC", {}}, {"R@1", {}}, {"R@5", {}}, {"MRR", {}}};
    std::string tsv;
    if (!input.empty()) {
      manifest.input(input);
      std::ifstream in(input);
      if (!in) throw ValidationError("cannot read " + input);
      std::string line;
      std::getline(in, line);
      std::size_t line_no = 1;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string label;
        double v[5];
        row >> label >> v[0] >> v[1] >> v[2] >> v[3] >> v[4];
        if (!row) throw ParseError("expected value and five metrics", line_no);
        labels.push_back(label);
        for (int i = 0; i < 5; ++i) series[static_cast<std::size_t>(i)].second.push_back(v[i]);
      }
      if (labels.empty()) throw ValidationError(input + " holds no sweep rows");
      std::ifstream again(input);
      tsv.assign(std::istreambuf_iterator<char>(again), {});
    } else {
      if (values.empty()) throw ValidationError("--values is empty");
      const auto base_model = model.resolve();
      const auto base_train = train.resolve(seed);
      const auto data = load_dataset(data_dir);
      manifest.input(data_dir);
      const auto split = temporal_split(data.interactions, train.val_days, train.test_days, train.horizon_days);
      std::ostringstream rows;
      rows << "value\tval_gauc\ttest_gauc\trecall_at_1\trecall_at_5\tmrr\n" << std::setprecision(10);
      for (const auto& value : values) {
        auto mc = base_model;
        auto tc = base_train;
        apply(param, value, mc, tc);
        mc.validate();
        tc.validate();
        const Corpus corpus(data, split.val_start, mc.max_history);
        ShpjfModel net(mc, data.vocab.size(), data.candidates.size(), data.jobs.size(), seed);
        const auto result = shpjf::train(net, corpus, split.train, split.val, tc);
        const auto report = evaluate(net, corpus, split.test, tc.weighting);
        const double metrics[] = {result.best_val_gauc, report.gauc, report.recall_at_1, report.recall_at_5,
                                  report.mrr};
        labels.push_back(value);
        rows << value;
        for (std::size_t i = 0; i < 5; ++i) {
          series[i].second.push_back(metrics[i]);
          rows << '\t' << metrics[i];
        }
        rows << '\n';
        log << param << " = " << value << ": test GAUC " << fmt(report.gauc) << '\n';
      }
      tsv = rows.str();
    }
    write_text(dir / "sweep.tsv", tsv);
    write_text(dir / "sweep.svg", render_svg(param, labels, series));
    manifest.output(dir / "sweep.tsv");
    manifest.output(dir / "sweep.svg");
    manifest.write(dir);
    log << "wrote " << (dir / "sweep.svg").string() << '\n';
    return kExitOk;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SHPJF person-job fit: synthetic data, training, evaluation and serving simulation", "shpjf"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  GenerateCmd generate;
  TrainCmd train_cmd;
  EvaluateCmd evaluate_cmd;
  AblateCmd ablate;
  GradcheckCmd gradcheck;
  ServeSimCmd serve;
  PlotCmd plot;
  generate.add(app);
  train_cmd.add(app);
  evaluate_cmd.add(app);
  ablate.add(app);
  gradcheck.add(app);
  serve.add(app);
  plot.add(app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }

  try {
    if (generate.cmd) return generate.run(out);
    if (train_cmd.cmd) return train_cmd.run(out);
    if (evaluate_cmd.cmd) return evaluate_cmd.run(out);
    if (ablate.cmd) return ablate.run(out);
    if (gradcheck.cmd) return gradcheck.run(out, err);
    if (serve.cmd) return serve.run(out);
    if (plot.cmd) return plot.run(out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitValidation;
}

}  // namespace shpjf::cli
