#include "shpjf/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "shpjf/errors.hpp"

namespace shpjf {

using json = nlohmann::ordered_json;

const CandidateRecord& Dataset::candidate(UserId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= candidates.size() ||
      candidates[static_cast<std::size_t>(id)].user_id != id) {
    throw LookupError("unknown user id " + std::to_string(id));
  }
  return candidates[static_cast<std::size_t>(id)];
}

const JobRecord& Dataset::job(JobId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= jobs.size() || jobs[static_cast<std::size_t>(id)].job_id != id) {
    throw LookupError("unknown job id " + std::to_string(id));
  }
  return jobs[static_cast<std::size_t>(id)];
}

void Dataset::check_integrity() const {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.user_id != static_cast<UserId>(i)) throw ValidationError("candidate ids must be dense and ordered");
    if (c.resume.empty()) throw ValidationError("candidate " + std::to_string(i) + " has an empty resume");
    for (const auto& h : c.history) {
      if (h.query.empty()) throw ValidationError("candidate " + std::to_string(i) + " has an empty query");
      job(h.job_id);
    }
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (jobs[i].job_id != static_cast<JobId>(i)) throw ValidationError("job ids must be dense and ordered");
    if (jobs[i].jd.empty()) throw ValidationError("job " + std::to_string(i) + " has an empty description");
  }
  std::map<std::int64_t, int> positives_per_group;
  for (const auto& r : interactions) {
    candidate(r.user_id);
    job(r.job_id);
    if (r.label != 0 && r.label != 1) throw ValidationError("label must be 0 or 1");
    positives_per_group[r.impression_id] += r.label;
  }
  for (const auto& [group, count] : positives_per_group) {
    if (count != 1) {
      throw ValidationError("impression " + std::to_string(group) + " has " + std::to_string(count) + " positives");
    }
  }
}

// ---------------------------------------------------------------------------
// Generator configuration

void GeneratorConfig::validate() const {
  if (users == 0 || jobs == 0 || positives == 0) throw ConfigError("generator sizes must be positive");
  if (categories == 0 || terms_per_category == 0) throw ConfigError("need at least one category and term");
  if (categories * terms_per_category >= vocab_terms) {
    throw ConfigError("infeasible generator config: " + std::to_string(categories) + " categories x " +
                      std::to_string(terms_per_category) + " terms leaves no generic terms in a vocabulary of " +
                      std::to_string(vocab_terms));
  }
  if (days < 3) throw ConfigError("generator needs at least 3 days");
  if (zero_history_fraction < 0.0 || zero_history_fraction >= 1.0) {
    throw ConfigError("zero_history_fraction must be in [0, 1)");
  }
  if (mean_history < 1.0) throw ConfigError("mean_history must be at least 1");
  if (intention_strength < 0.0 || intention_strength > 1.0) throw ConfigError("intention_strength must be in [0, 1]");
  if (uninformative_resume_fraction < 0.0 || uninformative_resume_fraction > 1.0) {
    throw ConfigError("uninformative_resume_fraction must be in [0, 1]");
  }
  if (min_intentions == 0 || min_intentions > max_intentions || max_intentions > categories) {
    throw ConfigError("intention count range must satisfy 1 <= min <= max <= categories");
  }
  if (exposure_size == 0) throw ConfigError("exposure_size must be positive");
  if (jd_min_tokens == 0 || jd_min_tokens > jd_max_tokens) throw ConfigError("bad description length range");
  if (jd_category_share < 0.0 || jd_category_share > 1.0) throw ConfigError("jd_category_share must be in [0, 1]");
}

namespace {

template <typename Fn>
void for_each_field(GeneratorConfig& c, Fn&& fn) {
  fn("users", c.users);
  fn("jobs", c.jobs);
  fn("positives", c.positives);
  fn("vocab_terms", c.vocab_terms);
  fn("categories", c.categories);
  fn("terms_per_category", c.terms_per_category);
  fn("days", c.days);
  fn("mean_history", c.mean_history);
  fn("zero_history_fraction", c.zero_history_fraction);
  fn("intention_strength", c.intention_strength);
  fn("uninformative_resume_fraction", c.uninformative_resume_fraction);
  fn("min_intentions", c.min_intentions);
  fn("max_intentions", c.max_intentions);
  fn("negatives_per_positive", c.negatives_per_positive);
  fn("exposure_size", c.exposure_size);
  fn("jd_min_tokens", c.jd_min_tokens);
  fn("jd_max_tokens", c.jd_max_tokens);
  fn("jd_category_share", c.jd_category_share);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

GeneratorConfig GeneratorConfig::parse(const std::string& text) {
  GeneratorConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    bool found = false;
    for_each_field(config, [&](const char* name, auto& field) {
      if (key != name) return;
      found = true;
      std::istringstream vs(value);
      vs >> field;
      if (!vs || !vs.eof()) throw ParseError("bad value for '" + key + "'", line_no);
    });
    if (!found) throw ParseError("unknown generator key '" + key + "'", line_no);
  }
  config.validate();
  return config;
}

GeneratorConfig GeneratorConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read generator config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string GeneratorConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  auto copy = *this;
  for_each_field(copy, [&](const char* name, auto& field) { out << name << " = " << field << '\n'; });
  return out.str();
}

// ---------------------------------------------------------------------------
// Generator

namespace {

template <typename T>
const T& pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

std::size_t query_word_count(std::mt19937_64& rng) {
  // P(1) = 0.6, P(2) = 0.3, P(3) = 0.1: mean 1.5 words.
  std::discrete_distribution<std::size_t> dist({0.6, 0.3, 0.1});
  return dist(rng) + 1;
}

}  // namespace

GeneratedData generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  GeneratedData out;
  auto& data = out.data;

  // Term names carry no category information: categories own a random subset.
  std::vector<TokenId> term_ids;
  for (std::size_t i = 0; i < config.vocab_terms; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "w%04zu", i);
    term_ids.push_back(data.vocab.add(name));
  }
  std::shuffle(term_ids.begin(), term_ids.end(), rng);
  std::vector<std::vector<TokenId>> category_terms(config.categories);
  std::size_t next = 0;
  for (auto& pool : category_terms) {
    for (std::size_t t = 0; t < config.terms_per_category; ++t) pool.push_back(term_ids[next++]);
  }
  const std::vector<TokenId> generic_terms(term_ids.begin() + static_cast<std::ptrdiff_t>(next), term_ids.end());

  std::uniform_int_distribution<int> category_dist(0, static_cast<int>(config.categories) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<Timestamp> ts_dist(0, static_cast<Timestamp>(config.days) * kSecondsPerDay - 1);

  // Jobs.
  std::vector<std::vector<JobId>> jobs_by_category(config.categories);
  std::uniform_int_distribution<std::size_t> jd_len(config.jd_min_tokens, config.jd_max_tokens);
  for (std::size_t j = 0; j < config.jobs; ++j) {
    JobRecord job;
    job.job_id = static_cast<JobId>(j);
    job.latent_category = category_dist(rng);
    const auto len = jd_len(rng);
    for (std::size_t t = 0; t < len; ++t) {
      const bool topical = unit(rng) < config.jd_category_share;
      job.jd.push_back(topical ? pick(category_terms[static_cast<std::size_t>(job.latent_category)], rng)
                               : pick(generic_terms, rng));
    }
    jobs_by_category[static_cast<std::size_t>(job.latent_category)].push_back(job.job_id);
    out.job_categories.push_back(job.latent_category);
    data.jobs.push_back(std::move(job));
  }
  auto job_in_category = [&](int category) {
    const auto& pool = jobs_by_category[static_cast<std::size_t>(category)];
    if (pool.empty()) {
      std::uniform_int_distribution<JobId> any(0, static_cast<JobId>(config.jobs) - 1);
      return any(rng);
    }
    return pick(pool, rng);
  };

  // Candidates.
  const double nonzero_mean = config.mean_history / (1.0 - config.zero_history_fraction);
  std::poisson_distribution<std::size_t> extra_history(nonzero_mean - 1.0);
  std::uniform_int_distribution<std::size_t> intention_count(config.min_intentions, config.max_intentions);
  std::vector<std::vector<double>> mixtures;
  for (std::size_t u = 0; u < config.users; ++u) {
    std::vector<int> intentions;
    const auto n = intention_count(rng);
    while (intentions.size() < n) {
      const int c = category_dist(rng);
      if (std::find(intentions.begin(), intentions.end(), c) == intentions.end()) intentions.push_back(c);
    }
    std::vector<double> weights(n);
    for (auto& w : weights) w = 0.2 + unit(rng);
    mixtures.push_back(weights);
    std::discrete_distribution<std::size_t> mixture(weights.begin(), weights.end());
    auto intended_category = [&]() {
      return unit(rng) < config.intention_strength ? intentions[mixture(rng)] : category_dist(rng);
    };

    CandidateRecord cand;
    cand.user_id = static_cast<UserId>(u);
    if (unit(rng) < config.uninformative_resume_fraction) {
      std::uniform_int_distribution<std::size_t> len(2, 4);
      for (auto k = len(rng); k > 0; --k) cand.resume.push_back(pick(generic_terms, rng));
    } else {
      std::uniform_int_distribution<std::size_t> len(8, 16);
      for (auto k = len(rng); k > 0; --k) {
        const bool topical = unit(rng) < 0.6;
        cand.resume.push_back(topical ? pick(category_terms[static_cast<std::size_t>(intentions[mixture(rng)])], rng)
                                      : pick(generic_terms, rng));
      }
    }
    if (unit(rng) >= config.zero_history_fraction) {
      const auto length = 1 + extra_history(rng);
      for (std::size_t i = 0; i < length; ++i) {
        HistoryEntry entry;
        const int category = intended_category();
        const auto& pool = category_terms[static_cast<std::size_t>(category)];
        for (auto k = query_word_count(rng); k > 0; --k) entry.query.push_back(pick(pool, rng));
        entry.job_id = job_in_category(category);
        entry.ts = ts_dist(rng);
        cand.history.push_back(std::move(entry));
      }
      std::stable_sort(cand.history.begin(), cand.history.end(),
                       [](const HistoryEntry& a, const HistoryEntry& b) { return a.ts < b.ts; });
    }
    out.user_intentions.push_back(std::move(intentions));
    data.candidates.push_back(std::move(cand));
  }

  std::unordered_map<UserId, std::unordered_set<JobId>> search_jobs;
  for (const auto& c : data.candidates) {
    auto& set = search_jobs[c.user_id];
    for (const auto& h : c.history) set.insert(h.job_id);
  }

  // Positives with their exposure lists. Search-channel jobs never become
  // recommendation-channel instances for the same user.
  std::vector<Exposure> exposures;
  std::uniform_int_distribution<JobId> any_job(0, static_cast<JobId>(config.jobs) - 1);
  for (std::size_t i = 0; i < config.positives; ++i) {
    const auto user = static_cast<UserId>(i % config.users);
    const auto& intentions = out.user_intentions[static_cast<std::size_t>(user)];
    const auto& weights = mixtures[static_cast<std::size_t>(user)];
    std::discrete_distribution<std::size_t> mixture(weights.begin(), weights.end());
    const int category = unit(rng) < config.intention_strength ? intentions[mixture(rng)] : category_dist(rng);
    const auto& blocked = search_jobs[user];
    JobId positive = job_in_category(category);
    for (int attempt = 0; attempt < 32 && blocked.count(positive); ++attempt) positive = job_in_category(category);
    while (blocked.count(positive)) positive = any_job(rng);

    Exposure e;
    e.user_id = user;
    e.positive = positive;
    e.impression_id = static_cast<std::int64_t>(i);
    e.ts = ts_dist(rng);
    const auto want = std::min<std::size_t>(config.exposure_size, config.jobs - 1);
    std::unordered_set<JobId> seen{positive};
    while (e.shown.size() < want) {
      const auto j = any_job(rng);
      if (seen.insert(j).second) e.shown.push_back(j);
    }
    exposures.push_back(std::move(e));
  }
  data.interactions = sample_negatives(exposures, config.negatives_per_positive, search_jobs, rng);
  return out;
}

std::vector<InteractionRecord> sample_negatives(std::span<const Exposure> exposures, std::size_t ratio,
                                                const std::unordered_map<UserId, std::unordered_set<JobId>>& search_jobs,
                                                std::mt19937_64& rng) {
  std::vector<InteractionRecord> out;
  static const std::unordered_set<JobId> kNone;
  for (const auto& e : exposures) {
    auto it = search_jobs.find(e.user_id);
    const auto& blocked = it == search_jobs.end() ? kNone : it->second;
    std::vector<JobId> usable;
    for (auto j : e.shown) {
      if (j != e.positive && !blocked.count(j)) usable.push_back(j);
    }
    if (usable.empty()) {
      std::cerr << "warning: impression " << e.impression_id << " has no usable exposures; dropped\n";
      continue;
    }
    // Partial Fisher-Yates: first `take` entries become a uniform sample.
    const auto take = std::min(ratio, usable.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> dist(i, usable.size() - 1);
      std::swap(usable[i], usable[dist(rng)]);
    }
    out.push_back({e.user_id, e.positive, 1, e.impression_id, e.ts});
    for (std::size_t i = 0; i < take; ++i) out.push_back({e.user_id, usable[i], 0, e.impression_id, e.ts});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits and views

Split temporal_split(std::span<const InteractionRecord> interactions, std::size_t val_days, std::size_t test_days,
                     std::size_t horizon_days) {
  if (horizon_days == 0) {
    Timestamp latest = 0;
    for (const auto& r : interactions) latest = std::max(latest, r.ts);
    horizon_days = static_cast<std::size_t>(latest / kSecondsPerDay) + 1;
  }
  if (horizon_days < val_days + test_days + 1) {
    throw ValidationError("temporal_split: " + std::to_string(horizon_days) + " days cannot hold " +
                          std::to_string(val_days) + " validation + " + std::to_string(test_days) +
                          " test days and a training day");
  }
  Split split;
  split.test_start = static_cast<Timestamp>(horizon_days - test_days) * kSecondsPerDay;
  split.val_start = static_cast<Timestamp>(horizon_days - test_days - val_days) * kSecondsPerDay;
  // Groups share one timestamp; split on the group's earliest timestamp so a
  // group never straddles a boundary.
  std::unordered_map<std::int64_t, Timestamp> group_ts;
  for (const auto& r : interactions) {
    auto [it, fresh] = group_ts.emplace(r.impression_id, r.ts);
    if (!fresh) it->second = std::min(it->second, r.ts);
  }
  for (const auto& r : interactions) {
    const auto ts = group_ts[r.impression_id];
    if (ts >= split.test_start) {
      split.test.push_back(r);
    } else if (ts >= split.val_start) {
      split.val.push_back(r);
    } else {
      split.train.push_back(r);
    }
  }
  return split;
}

UserView make_user_view(const CandidateRecord& record, Timestamp cutoff, std::size_t max_history) {
  UserView view;
  view.user_id = record.user_id;
  view.resume = record.resume;
  for (const auto& h : record.history) {
    if (h.ts < cutoff) view.history.push_back(h);
  }
  if (view.history.size() > max_history) {
    view.history.erase(view.history.begin(),
                       view.history.end() - static_cast<std::ptrdiff_t>(max_history));
  }
  return view;
}

std::vector<UserView> make_user_views(const Dataset& data, Timestamp cutoff, std::size_t max_history) {
  std::vector<UserView> views;
  views.reserve(data.candidates.size());
  for (const auto& c : data.candidates) views.push_back(make_user_view(c, cutoff, max_history));
  return views;
}

std::vector<JobView> make_job_views(const Dataset& data) {
  std::vector<JobView> views;
  views.reserve(data.jobs.size());
  for (const auto& j : data.jobs) views.push_back({j.job_id, j.jd});
  return views;
}

// ---------------------------------------------------------------------------
// Record files

namespace {

std::vector<TokenId> tokens_from(const json& value, const Vocabulary& vocab, std::size_t line, const char* field) {
  if (!value.is_string()) throw ParseError(std::string("field '") + field + "' must be a string", line);
  auto ids = vocab.encode(value.get<std::string>());
  if (ids.empty()) throw ParseError(std::string("field '") + field + "' is empty", line);
  return ids;
}

void require_fields(const json& obj, std::initializer_list<const char*> fields, std::size_t line) {
  if (!obj.is_object()) throw ParseError("record must be a JSON object", line);
  for (const auto* f : fields) {
    if (!obj.contains(f)) throw ParseError(std::string("missing field '") + f + "'", line);
  }
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto* f : fields) known = known || item.key() == f;
    if (!known) throw ParseError("unknown field '" + item.key() + "'", line);
  }
}

template <typename T>
T integer_field(const json& obj, const char* name, std::size_t line) {
  const auto& v = obj.at(name);
  if (!v.is_number_integer()) throw ParseError(std::string("field '") + name + "' must be an integer", line);
  return v.get<T>();
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.filename().string() + ": malformed record: " + e.what(), line_no);
    }
    fn(obj, line_no);
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

void save_candidates(std::span<const CandidateRecord> records, const Vocabulary& vocab,
                     const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    json obj;
    obj["user_id"] = r.user_id;
    obj["resume"] = vocab.decode(r.resume);
    json history = json::array();
    for (const auto& h : r.history) {
      json entry;
      entry["query"] = vocab.decode(h.query);
      entry["job_id"] = h.job_id;
      entry["ts"] = h.ts;
      history.push_back(std::move(entry));
    }
    obj["history"] = std::move(history);
    lines.push_back(obj.dump());
  }
  write_lines(path, lines);
}

std::vector<CandidateRecord> load_candidates(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::vector<CandidateRecord> out;
  for_each_line(path, [&](const json& obj, std::size_t line) {
    require_fields(obj, {"user_id", "resume", "history"}, line);
    CandidateRecord r;
    r.user_id = integer_field<UserId>(obj, "user_id", line);
    r.resume = tokens_from(obj.at("resume"), vocab, line, "resume");
    if (!obj.at("history").is_array()) throw ParseError("field 'history' must be an array", line);
    for (const auto& e : obj.at("history")) {
      require_fields(e, {"query", "job_id", "ts"}, line);
      r.history.push_back({tokens_from(e.at("query"), vocab, line, "query"), integer_field<JobId>(e, "job_id", line),
                           integer_field<Timestamp>(e, "ts", line)});
    }
    out.push_back(std::move(r));
  });
  return out;
}

void save_jobs(std::span<const JobRecord> records, const Vocabulary& vocab, const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    json obj;
    obj["job_id"] = r.job_id;
    obj["jd"] = vocab.decode(r.jd);
    lines.push_back(obj.dump());
  }
  write_lines(path, lines);
}

std::vector<JobRecord> load_jobs(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::vector<JobRecord> out;
  for_each_line(path, [&](const json& obj, std::size_t line) {
    require_fields(obj, {"job_id", "jd"}, line);
    JobRecord r;
    r.job_id = integer_field<JobId>(obj, "job_id", line);
    r.jd = tokens_from(obj.at("jd"), vocab, line, "jd");
    out.push_back(std::move(r));
  });
  return out;
}

void save_interactions(std::span<const InteractionRecord> records, const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    json obj;
    obj["user_id"] = r.user_id;
    obj["job_id"] = r.job_id;
    obj["label"] = r.label;
    obj["impression_id"] = r.impression_id;
    obj["ts"] = r.ts;
    lines.push_back(obj.dump());
  }
  write_lines(path, lines);
}

std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path) {
  std::vector<InteractionRecord> out;
  for_each_line(path, [&](const json& obj, std::size_t line) {
    require_fields(obj, {"user_id", "job_id", "label", "impression_id", "ts"}, line);
    InteractionRecord r;
    r.user_id = integer_field<UserId>(obj, "user_id", line);
    r.job_id = integer_field<JobId>(obj, "job_id", line);
    r.label = integer_field<int>(obj, "label", line);
    if (r.label != 0 && r.label != 1) throw ParseError("label must be 0 or 1", line);
    r.impression_id = integer_field<std::int64_t>(obj, "impression_id", line);
    r.ts = integer_field<Timestamp>(obj, "ts", line);
    out.push_back(r);
  });
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data.vocab.save(dir / kVocabFile);
  save_candidates(data.candidates, data.vocab, dir / kCandidatesFile);
  save_jobs(data.jobs, data.vocab, dir / kJobsFile);
  save_interactions(data.interactions, dir / kInteractionsFile);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.vocab = Vocabulary::load(dir / kVocabFile);
  data.candidates = load_candidates(dir / kCandidatesFile, data.vocab);
  data.jobs = load_jobs(dir / kJobsFile, data.vocab);
  data.interactions = load_interactions(dir / kInteractionsFile);
  data.check_integrity();
  return data;
}

DatasetStats dataset_stats(const Dataset& data) {
  DatasetStats s;
  s.candidates = data.candidates.size();
  s.jobs = data.jobs.size();
  std::size_t entries = 0, words = 0;
  for (const auto& c : data.candidates) {
    entries += c.history.size();
    for (const auto& h : c.history) words += h.query.size();
  }
  for (const auto& r : data.interactions) (r.label ? s.positives : s.negatives) += 1;
  s.mean_history = s.candidates ? static_cast<double>(entries) / static_cast<double>(s.candidates) : 0.0;
  s.mean_query_words = entries ? static_cast<double>(words) / static_cast<double>(entries) : 0.0;
  return s;
}

}  // namespace shpjf
