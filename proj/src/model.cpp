#include "shpjf/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "shpjf/errors.hpp"
#include "shpjf/ops.hpp"

namespace shpjf {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_q: return "no_q";
    case Variant::no_j: return "no_j";
    case Variant::no_c: return "no_c";
    case Variant::text_only: return "text_only";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::full, Variant::no_q, Variant::no_j, Variant::no_c, Variant::text_only}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "' (expected full, no_q, no_j, no_c, text_only)");
}

std::string to_string(ClusterSoftmaxAxis axis) { return axis == ClusterSoftmaxAxis::clusters ? "clusters" : "history"; }

ClusterSoftmaxAxis parse_cluster_axis(const std::string& name) {
  if (name == "clusters") return ClusterSoftmaxAxis::clusters;
  if (name == "history") return ClusterSoftmaxAxis::history;
  throw ConfigError("unknown cluster softmax axis '" + name + "' (expected clusters or history)");
}

std::string to_string(QueryStreamValues values) { return values == QueryStreamValues::cj_prime ? "cj_prime" : "cj"; }

QueryStreamValues parse_query_values(const std::string& name) {
  if (name == "cj_prime") return QueryStreamValues::cj_prime;
  if (name == "cj") return QueryStreamValues::cj;
  throw ConfigError("unknown query stream values '" + name + "' (expected cj_prime or cj)");
}

bool ModelConfig::uses_job_stream() const {
  return variant == Variant::full || variant == Variant::no_q || variant == Variant::no_c ||
         (variant == Variant::no_j && query_values == QueryStreamValues::cj);
}

bool ModelConfig::uses_query_stream() const {
  return variant == Variant::full || variant == Variant::no_j || variant == Variant::no_c;
}

void ModelConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (clusters == 0) throw ConfigError("number of clusters k must be positive");
  MHAConfig{heads, id_dim}.validate();
  encoder().validate();
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (max_history == 0) throw ConfigError("max_history must be positive");
  if (intention_hidden == 0 || intention_out == 0 || prediction_hidden == 0) {
    throw ConfigError("MLP widths must be positive");
  }
}

namespace {

template <typename Fn>
void for_each_field(ModelConfig& c, Fn&& fn) {
  fn("lambda", c.lambda);
  fn("clusters", c.clusters);
  fn("heads", c.heads);
  fn("id_dim", c.id_dim);
  fn("word_dim", c.word_dim);
  fn("dropout", c.dropout);
  fn("max_history", c.max_history);
  fn("encoder_layers", c.encoder_layers);
  fn("encoder_heads", c.encoder_heads);
  fn("encoder_ff", c.encoder_ff);
  fn("max_tokens", c.max_tokens);
  fn("intention_hidden", c.intention_hidden);
  fn("intention_out", c.intention_out);
  fn("prediction_hidden", c.prediction_hidden);
  fn("variant", c.variant);
  fn("cluster_softmax_axis", c.cluster_axis);
  fn("query_stream_values", c.query_values);
}

template <typename T>
std::string field_text(const T& v) {
  if constexpr (std::is_same_v<T, Variant> || std::is_same_v<T, ClusterSoftmaxAxis> ||
                std::is_same_v<T, QueryStreamValues>) {
    return to_string(v);
  } else {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  }
}

template <typename T>
void parse_field(const std::string& text, T& v) {
  if constexpr (std::is_same_v<T, Variant>) {
    v = parse_variant(text);
  } else if constexpr (std::is_same_v<T, ClusterSoftmaxAxis>) {
    v = parse_cluster_axis(text);
  } else if constexpr (std::is_same_v<T, QueryStreamValues>) {
    v = parse_query_values(text);
  } else {
    std::istringstream in(text);
    in >> v;
    if (!in || !in.eof()) throw ConfigError("bad numeric value '" + text + "'");
  }
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  auto copy = *this;
  for_each_field(copy, [&](const char* name, const auto& v) { out << name << " = " << field_text(v) << '\n'; });
  return out.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig config;
  auto kv = parse_key_values(text);
  for_each_field(config, [&](const char* name, auto& v) {
    if (auto it = kv.find(name); it != kv.end()) {
      parse_field(it->second, v);
      kv.erase(it);
    }
  });
  if (!kv.empty()) throw ConfigError("unknown model config key '" + kv.begin()->first + "'");
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------

namespace {

// Each component draws from its own stream so that variants built with the
// same seed share initial values for the components they have in common.
std::mt19937_64 component_rng(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

void add_mlp(NamedParams& out, const std::string& prefix, const Mlp& mlp) {
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    out.emplace_back(prefix + ".w" + std::to_string(i), mlp.weights[i]);
    out.emplace_back(prefix + ".b" + std::to_string(i), mlp.biases[i]);
  }
}

double row_norm(const Tensor& t, std::size_t row) {
  double s = 0.0;
  for (std::size_t j = 0; j < t.cols(); ++j) s += t.at(row, j) * t.at(row, j);
  return std::sqrt(s);
}

}  // namespace

ShpjfModel::ShpjfModel(const ModelConfig& config, std::size_t vocab_size, std::size_t users, std::size_t jobs,
                       std::uint64_t seed)
    : config_(config), num_users_(users), num_jobs_(jobs) {
  config.validate();
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kReserved)) throw ConfigError("vocabulary has no terms");
  const auto dw = config.word_dim, dj = config.id_dim;
  {
    auto rng = component_rng(seed, "word_emb");
    word_ = make_embedding(vocab_size, dw, EmbeddingKind::word, rng);
  }
  {
    auto rng = component_rng(seed, "encoder");
    encoder_ = CrossEncoder(config.encoder(), rng);
  }
  const std::size_t pred_in = dw + (config.uses_intention() ? config.intention_out + 1 : 0);
  {
    auto rng = component_rng(seed, "predict");
    prediction_mlp_ = make_mlp({pred_in, config.prediction_hidden, 1}, rng);
  }
  if (!config.uses_intention()) return;
  if (users == 0 || jobs == 0) throw ConfigError("intention model needs user and job tables");
  {
    auto rng = component_rng(seed, "job_emb");
    job_ = make_embedding(jobs, dj, EmbeddingKind::job_id, rng);
  }
  {
    auto rng = component_rng(seed, "user_emb");
    user_ = make_embedding(users, dj, EmbeddingKind::user_id, rng);
  }
  const MHAConfig mha{config.heads, dj};
  const bool clustered = config.variant != Variant::no_c;
  if (config.uses_job_stream()) {
    if (clustered) {
      auto rng = component_rng(seed, "cluster_j");
      cluster_job_ = make_cluster_layer(config.clusters, dj, rng);
    }
    auto rng = component_rng(seed, "attn_j");
    attn_job_ = make_attention(mha, rng);
  }
  if (config.uses_query_stream()) {
    auto rng = component_rng(seed, "query_proj");
    const double stddev = 1.0 / std::sqrt(static_cast<double>(dw));
    query_proj_ = init_normal({dw, dj}, stddev, rng);
    auto rng2 = component_rng(seed, "jd_proj");
    jd_proj_ = init_normal({dw, dj}, stddev, rng2);
    if (clustered) {
      auto rng3 = component_rng(seed, "cluster_q");
      cluster_joint_ = make_cluster_layer(config.clusters, 2 * dj, rng3);
    }
    auto rng4 = component_rng(seed, "attn_q");
    attn_query_ = make_attention(mha, rng4);
  }
  {
    auto rng = component_rng(seed, "intention_mlp");
    intention_mlp_ = make_mlp({4 * dj, config.intention_hidden, config.intention_out}, rng);
  }
  empty_intention_ = Tensor::zeros({1, config.intention_out}, true);
}

NamedParams ShpjfModel::named_parameters() const {
  NamedParams out;
  out.emplace_back("word_emb", word_.table);
  encoder_.collect(out, "encoder.");
  if (config_.uses_intention()) {
    out.emplace_back("job_emb", job_.table);
    out.emplace_back("user_emb", user_.table);
    if (cluster_job_.weight.defined()) {
      out.emplace_back("cluster_j.weight", cluster_job_.weight);
      out.emplace_back("cluster_j.bias", cluster_job_.bias);
    }
    if (attn_job_.wq.defined()) {
      out.emplace_back("attn_j.wq", attn_job_.wq);
      out.emplace_back("attn_j.wk", attn_job_.wk);
      out.emplace_back("attn_j.wv", attn_job_.wv);
      out.emplace_back("attn_j.wo", attn_job_.wo);
    }
    if (query_proj_.defined()) {
      out.emplace_back("query_proj", query_proj_);
      out.emplace_back("jd_proj", jd_proj_);
    }
    if (cluster_joint_.weight.defined()) {
      out.emplace_back("cluster_q.weight", cluster_joint_.weight);
      out.emplace_back("cluster_q.bias", cluster_joint_.bias);
    }
    if (attn_query_.wq.defined()) {
      out.emplace_back("attn_q.wq", attn_query_.wq);
      out.emplace_back("attn_q.wk", attn_query_.wk);
      out.emplace_back("attn_q.wv", attn_query_.wv);
      out.emplace_back("attn_q.wo", attn_query_.wo);
    }
    add_mlp(out, "intention_mlp", intention_mlp_);
    out.emplace_back("empty_intention", empty_intention_);
  }
  add_mlp(out, "predict", prediction_mlp_);
  return out;
}

std::vector<Tensor> ShpjfModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::optional<Tensor> ShpjfModel::parameter(const std::string& name) const {
  for (auto& [n, t] : named_parameters()) {
    if (n == name) return t;
  }
  return std::nullopt;
}

IntentionState ShpjfModel::intention_state(const UserView& user, Timestamp at) const {
  if (!config_.uses_intention()) throw ConfigError("text_only model has no intention component");
  if (user.history.empty()) return IntentionState::empty_state(at);
  std::vector<std::int64_t> job_ids;
  std::vector<std::vector<TokenId>> queries;
  for (const auto& h : user.history) {
    if (h.job_id < 0 || static_cast<std::size_t>(h.job_id) >= num_jobs_) {
      throw LookupError("unknown job id " + std::to_string(h.job_id) + " in history of user " +
                        std::to_string(user.user_id));
    }
    job_ids.push_back(h.job_id);
    queries.push_back(h.query);
  }
  IntentionState state;
  state.computed_at = at;
  const auto history_jobs = embed_ids(job_ids, job_);
  const bool clustered = config_.variant != Variant::no_c;
  if (config_.uses_job_stream()) {
    state.cj = clustered ? cluster_job_stream(history_jobs, cluster_job_, config_.cluster_axis).clustered : history_jobs;
  }
  if (config_.uses_query_stream()) {
    const auto history_queries = ops::matmul(pool_token_sequences(queries, word_), query_proj_);
    if (clustered) {
      auto joint = cluster_joint(history_queries, history_jobs, cluster_joint_, config_.cluster_axis);
      state.cq = joint.clustered_query;
      state.cj_prime = joint.clustered_job;
    } else {
      state.cq = history_queries;
      state.cj_prime = history_jobs;
    }
  }
  return state;
}

Tensor ShpjfModel::forward(std::span<const ScoringGroup> groups, const ForwardContext& ctx,
                           ForwardTrace* trace) const {
  if (groups.empty()) throw ValidationError("forward: no scoring groups");
  std::vector<TextPair> pairs;
  std::vector<std::int64_t> job_ids, user_ids;
  std::vector<std::vector<TokenId>> jds;
  for (const auto& g : groups) {
    if (g.user == nullptr) throw ValidationError("forward: group without user");
    if (g.user->resume.empty()) throw ValidationError("empty resume for user " + std::to_string(g.user->user_id));
    if (config_.uses_intention() &&
        (g.user->user_id < 0 || static_cast<std::size_t>(g.user->user_id) >= num_users_)) {
      throw LookupError("unknown user id " + std::to_string(g.user->user_id));
    }
    for (const auto* job : g.jobs) {
      if (job->jd.empty()) throw ValidationError("empty description for job " + std::to_string(job->job_id));
      if (config_.uses_intention() && (job->job_id < 0 || static_cast<std::size_t>(job->job_id) >= num_jobs_)) {
        throw LookupError("unknown job id " + std::to_string(job->job_id));
      }
      pairs.push_back({g.user->resume, job->jd});
      job_ids.push_back(job->job_id);
      user_ids.push_back(g.user->user_id);
      jds.push_back(job->jd);
    }
  }
  if (pairs.empty()) throw ValidationError("forward: no candidate jobs");
  if (trace) *trace = ForwardTrace{};

  auto drop = [&](const Tensor& t) { return ctx.dropout_active() ? ops::dropout(t, ctx.dropout, *ctx.rng) : t; };

  const auto text = encoder_.encode(pairs, word_, ctx);
  if (trace) trace->text = text;
  if (!config_.uses_intention()) {
    return ops::sigmoid(mlp_forward(drop(text), prediction_mlp_, ctx));
  }

  const auto candidates = embed_ids(job_ids, job_);
  const auto users = embed_ids(user_ids, user_);
  const auto s_match = ops::row_sum(ops::mul(candidates, users));
  Tensor jd_repr;
  if (config_.uses_query_stream()) jd_repr = encode_job_descs(jds, word_, jd_proj_);

  // Fused intentions of users with history go through one batched MLP; users
  // without history take the learned constant.
  std::vector<Tensor> fused_parts, fused_jobs;
  struct Piece {
    bool has_history;
    std::size_t rows;
  };
  std::vector<Piece> pieces;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    const auto n = g.jobs.size();
    if (n == 0) continue;
    IntentionState computed;
    const IntentionState* state = g.state;
    if (state == nullptr) {
      computed = intention_state(*g.user);
      state = &computed;
    }
    if (trace) trace->states.push_back(*state);
    pieces.push_back({!state->empty, n});
    if (state->empty) {
      offset += n;
      continue;
    }
    const auto h_j = ops::slice_rows(candidates, offset, offset + n);
    Tensor e_job, e_query;
    AttentionWeights wj, wq;
    if (config_.variant != Variant::no_j) {
      e_job = job_intention(h_j, state->cj, attn_job_, trace ? &wj : nullptr);
    }
    if (config_.variant != Variant::no_q) {
      const auto& values = config_.query_values == QueryStreamValues::cj ? state->cj : state->cj_prime;
      e_query = query_intention(ops::slice_rows(jd_repr, offset, offset + n), state->cq, values, attn_query_,
                                trace ? &wq : nullptr);
    }
    if (trace) {
      trace->job_attention.push_back(wj);
      trace->query_attention.push_back(wq);
    }
    Tensor fused;
    switch (config_.variant) {
      case Variant::no_q: fused = e_job; break;
      case Variant::no_j: fused = e_query; break;
      default: fused = fuse_intentions(e_job, e_query, config_.lambda); break;
    }
    fused_parts.push_back(fused);
    fused_jobs.push_back(h_j);
    offset += n;
  }

  Tensor matched;
  if (!fused_parts.empty()) {
    const auto fused = fused_parts.size() == 1 ? fused_parts.front() : ops::concat_rows(fused_parts);
    const auto jobs = fused_jobs.size() == 1 ? fused_jobs.front() : ops::concat_rows(fused_jobs);
    matched = intention_match(fused, jobs, intention_mlp_, ctx);
  }
  std::vector<Tensor> intention_rows;
  std::size_t matched_offset = 0;
  for (const auto& piece : pieces) {
    if (piece.has_history) {
      intention_rows.push_back(piece.rows == matched.rows()
                                   ? matched
                                   : ops::slice_rows(matched, matched_offset, matched_offset + piece.rows));
      matched_offset += piece.rows;
    } else {
      intention_rows.push_back(ops::repeat_rows(empty_intention_, piece.rows));
    }
  }
  const auto intention = intention_rows.size() == 1 ? intention_rows.front() : ops::concat_rows(intention_rows);
  if (trace) {
    trace->intention = intention;
    trace->s_match = s_match;
  }
  const Tensor features[] = {drop(text), drop(intention), s_match};
  return ops::sigmoid(mlp_forward(ops::concat_cols(features), prediction_mlp_, ctx));
}

Tensor ShpjfModel::batch_loss(std::span<const ScoringGroup> groups, const ForwardContext& ctx) const {
  std::vector<double> labels;
  for (const auto& g : groups) {
    if (g.labels.size() != g.jobs.size()) throw ValidationError("batch_loss: every job needs a label");
    for (int y : g.labels) labels.push_back(static_cast<double>(y));
  }
  const auto n = labels.size();
  auto probs = forward(groups, ctx);
  return ops::bce_loss(probs, Tensor::from({n, 1}, std::move(labels)));
}

std::vector<ScoredPair> ShpjfModel::score_group(const UserView& user, std::span<const JobView> jobs,
                                                const IntentionState* state) const {
  if (jobs.empty()) return {};
  ScoringGroup group;
  group.user = &user;
  group.state = state;
  for (const auto& j : jobs) group.jobs.push_back(&j);
  ForwardTrace trace;
  const ScoringGroup groups[] = {group};
  const auto probs = forward(groups, {}, &trace);
  std::vector<ScoredPair> out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    ScoredPair p;
    p.user_id = user.user_id;
    p.job_id = jobs[i].job_id;
    p.y_hat = probs.at(i);
    p.text_norm = row_norm(trace.text, i);
    if (trace.intention.defined()) {
      p.intention_norm = row_norm(trace.intention, i);
      p.s_match = trace.s_match.at(i);
    }
    out.push_back(p);
  }
  return out;
}

ScoredPair ShpjfModel::score_pair(const UserView& user, const JobView& job) const {
  return score_group(user, std::span<const JobView>(&job, 1)).front();
}

std::size_t ShpjfModel::copy_shared_parameters(const ShpjfModel& other) {
  std::map<std::string, Tensor> theirs;
  for (auto& [name, t] : other.named_parameters()) theirs.emplace(name, t);
  std::size_t copied = 0;
  for (auto& [name, t] : named_parameters()) {
    auto it = theirs.find(name);
    if (it == theirs.end() || it->second.shape() != t.shape()) continue;
    auto dst = t;
    std::copy(it->second.values().begin(), it->second.values().end(), dst.mutable_values().begin());
    ++copied;
  }
  return copied;
}

ShpjfModel ShpjfModel::clone() const {
  ShpjfModel copy(config_, vocab_size(), num_users_, num_jobs_, 0);
  copy.copy_shared_parameters(*this);
  return copy;
}

void ShpjfModel::save(const std::filesystem::path& path) const {
  std::ostringstream manifest;
  manifest << config_.to_text();
  manifest << "vocab_size = " << vocab_size() << '\n';
  manifest << "users = " << num_users_ << '\n';
  manifest << "jobs = " << num_jobs_ << '\n';
  const auto params = named_parameters();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
  detail::write_string(out, manifest.str());
  detail::write_pod<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    detail::write_string(out, name);
    detail::write_tensor(out, t);
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ShpjfModel ShpjfModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    throw ValidationError(path.string() + " is not a model checkpoint");
  }
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  auto kv = parse_key_values(detail::read_string(in));
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError(std::string("checkpoint manifest lacks '") + key + "'");
    const auto value = std::stoull(it->second);
    kv.erase(it);
    return static_cast<std::size_t>(value);
  };
  const auto vocab = take("vocab_size");
  const auto users = take("users");
  const auto jobs = take("jobs");
  std::ostringstream rest;
  for (const auto& [k, v] : kv) rest << k << " = " << v << '\n';
  ShpjfModel model(ModelConfig::parse(rest.str()), vocab, users, jobs, 0);

  std::map<std::string, Tensor> mine;
  for (auto& [name, t] : model.named_parameters()) mine.emplace(name, t);
  const auto count = detail::read_pod<std::uint64_t>(in);
  if (count != mine.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(mine.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = detail::read_string(in);
    auto t = detail::read_tensor(in);
    auto it = mine.find(name);
    if (it == mine.end()) throw ValidationError("checkpoint tensor '" + name + "' is not a model parameter");
    if (it->second.shape() != t.shape()) throw ValidationError("shape mismatch for checkpoint tensor '" + name + "'");
    std::copy(t.values().begin(), t.values().end(), it->second.mutable_values().begin());
  }
  return model;
}

// ---------------------------------------------------------------------------

double micro_grad_check(double step, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.clusters = 2;
  cfg.heads = 1;
  cfg.id_dim = 4;
  cfg.word_dim = 8;
  cfg.dropout = 0.0;
  cfg.max_history = 3;
  cfg.encoder_layers = 1;
  cfg.encoder_heads = 2;
  cfg.encoder_ff = 16;
  cfg.max_tokens = 12;
  cfg.intention_hidden = 8;
  cfg.intention_out = 4;
  cfg.prediction_hidden = 8;
  const std::size_t vocab = 20, users = 2, jobs = 5;
  ShpjfModel model(cfg, vocab, users, jobs, seed);

  // Default initialization leaves many gradients near 1e-9, where central
  // differences are dominated by round-off. A wider draw keeps them resolvable.
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> wide(0.0, 0.5);
  for (auto& [name, t] : model.named_parameters()) {
    for (auto& x : t.mutable_values()) x = wide(rng);
  }
  std::uniform_int_distribution<TokenId> term(Vocabulary::kReserved, static_cast<TokenId>(vocab) - 1);
  auto tokens = [&](std::size_t n) {
    std::vector<TokenId> t(n);
    for (auto& x : t) x = term(rng);
    return t;
  };
  std::vector<UserView> user_views(users);
  for (std::size_t u = 0; u < users; ++u) {
    user_views[u].user_id = static_cast<UserId>(u);
    user_views[u].resume = tokens(3 + u);
    for (std::size_t i = 0; i < 3; ++i) {
      user_views[u].history.push_back({tokens(1 + (i + u) % 2), static_cast<JobId>((i + 2 * u) % jobs),
                                       static_cast<Timestamp>(i)});
    }
  }
  std::vector<JobView> job_views(jobs);
  for (std::size_t j = 0; j < jobs; ++j) job_views[j] = {static_cast<JobId>(j), tokens(2 + j % 3)};

  std::vector<ScoringGroup> groups(2);
  groups[0].user = &user_views[0];
  groups[0].jobs = {&job_views[0], &job_views[1], &job_views[2]};
  groups[0].labels = {1, 0, 0};
  groups[1].user = &user_views[1];
  groups[1].jobs = {&job_views[3], &job_views[4]};
  groups[1].labels = {0, 1};

  auto params = model.parameters();
  return grad_check([&] { return model.batch_loss(groups); }, params, step);
}

}  // namespace shpjf
