#include "shpjf/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "shpjf/errors.hpp"
#include "shpjf/ops.hpp"

namespace shpjf {

Vocabulary::Vocabulary() {
  for (const char* special : {"[CLS]", "[SEP]", "[PAD]", "[UNK]"}) add(special);
}

TokenId Vocabulary::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw LookupError("token id " + std::to_string(id) + " not in vocabulary of size " +
                      std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(id(word));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary to " + path.string());
  for (std::size_t i = static_cast<std::size_t>(kReserved); i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read vocabulary from " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_of(" \t\r") != std::string::npos) {
      throw ParseError("vocabulary entries must be single non-empty tokens", line_no);
    }
    if (vocab.contains(line)) throw ParseError("duplicate vocabulary token '" + line + "'", line_no);
    vocab.add(line);
  }
  return vocab;
}

EmbeddingTable make_embedding(std::size_t count, std::size_t dim, EmbeddingKind kind, std::mt19937_64& rng,
                              double stddev) {
  return EmbeddingTable{init_normal({count, dim}, stddev, rng), kind};
}

Tensor embed_ids(std::span<const std::int64_t> ids, const EmbeddingTable& table) {
  return ops::gather_rows(table.table, ids);
}

namespace {

std::vector<TokenId> strip_pad(std::span<const TokenId> tokens) {
  std::vector<TokenId> kept;
  kept.reserve(tokens.size());
  for (auto t : tokens) {
    if (t != Vocabulary::kPad) kept.push_back(t);
  }
  return kept;
}

}  // namespace

Tensor pool_tokens(std::span<const TokenId> tokens, const EmbeddingTable& words) {
  const std::vector<TokenId> seq[] = {strip_pad(tokens)};
  if (seq[0].empty()) throw ValidationError("pool_tokens: sequence is empty after removing PAD");
  return pool_token_sequences(seq, words);
}

Tensor pool_token_sequences(std::span<const std::vector<TokenId>> sequences, const EmbeddingTable& words) {
  std::vector<std::int64_t> flat;
  std::vector<std::size_t> offsets{0};
  for (const auto& s : sequences) {
    for (auto t : s) {
      if (t != Vocabulary::kPad) flat.push_back(t);
    }
    if (flat.size() == offsets.back()) throw ValidationError("pool_tokens: sequence is empty after removing PAD");
    offsets.push_back(flat.size());
  }
  return ops::segment_mean(ops::gather_rows(words.table, flat), offsets);
}

void CrossEncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder needs at least one layer");
  if (heads == 0 || hidden % heads != 0) {
    throw ConfigError("encoder hidden size " + std::to_string(hidden) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (feed_forward == 0) throw ConfigError("encoder feed-forward width must be positive");
  if (max_tokens < 4) throw ConfigError("encoder max_tokens must be at least 4");
}

PairInput build_pair_input(std::span<const TokenId> resume, std::span<const TokenId> jd, std::size_t max_tokens) {
  if (resume.empty()) throw ValidationError("cross_encode: empty resume");
  if (jd.empty()) throw ValidationError("cross_encode: empty job description");
  if (max_tokens < 4) throw ConfigError("max_tokens must be at least 4");
  const std::size_t budget = max_tokens - 2;
  std::size_t r = resume.size(), t = jd.size();
  if (r + t > budget) {
    const double share = static_cast<double>(budget) * static_cast<double>(r) / static_cast<double>(r + t);
    std::size_t r_keep = static_cast<std::size_t>(std::llround(share));
    r_keep = std::clamp<std::size_t>(r_keep, 1, std::min(r, budget - 1));
    std::size_t t_keep = std::min(t, budget - r_keep);
    r_keep = std::min(r, budget - t_keep);
    r = r_keep;
    t = t_keep;
  }
  PairInput in;
  in.resume_kept = r;
  in.jd_kept = t;
  in.tokens.reserve(r + t + 2);
  in.tokens.push_back(Vocabulary::kCls);
  in.tokens.insert(in.tokens.end(), resume.begin(), resume.begin() + static_cast<std::ptrdiff_t>(r));
  in.tokens.push_back(Vocabulary::kSep);
  in.tokens.insert(in.tokens.end(), jd.begin(), jd.begin() + static_cast<std::ptrdiff_t>(t));
  in.segments.assign(r + 2, 0);
  in.segments.resize(r + t + 2, 1);
  return in;
}

CrossEncoder::CrossEncoder(const CrossEncoderConfig& config, std::mt19937_64& rng) : config_(config) {
  config.validate();
  const auto d = config.hidden, ff = config.feed_forward;
  const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
  const double fstd = 1.0 / std::sqrt(static_cast<double>(ff));
  position = init_normal({config.max_tokens, d}, 0.1, rng);
  segment = init_normal({2, d}, 0.1, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayer layer;
    layer.ln1_gain = Tensor::full({d}, 1.0, true);
    layer.ln1_shift = Tensor::zeros({d}, true);
    layer.wq = init_normal({d, d}, wstd, rng);
    layer.bq = Tensor::zeros({d}, true);
    layer.wk = init_normal({d, d}, wstd, rng);
    layer.wv = init_normal({d, d}, wstd, rng);
    layer.bv = Tensor::zeros({d}, true);
    layer.wo = init_normal({d, d}, wstd, rng);
    layer.bo = Tensor::zeros({d}, true);
    layer.ln2_gain = Tensor::full({d}, 1.0, true);
    layer.ln2_shift = Tensor::zeros({d}, true);
    layer.w1 = init_normal({d, ff}, wstd, rng);
    layer.b1 = Tensor::zeros({ff}, true);
    layer.w2 = init_normal({ff, d}, fstd, rng);
    layer.b2 = Tensor::zeros({d}, true);
    layers.push_back(std::move(layer));
  }
  final_gain = Tensor::full({d}, 1.0, true);
  final_shift = Tensor::zeros({d}, true);
}

void CrossEncoder::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + "position", position);
  out.emplace_back(prefix + "segment", segment);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto p = prefix + "layer" + std::to_string(l) + ".";
    const auto& L = layers[l];
    out.emplace_back(p + "ln1_gain", L.ln1_gain);
    out.emplace_back(p + "ln1_shift", L.ln1_shift);
    out.emplace_back(p + "wq", L.wq);
    out.emplace_back(p + "bq", L.bq);
    out.emplace_back(p + "wk", L.wk);
    out.emplace_back(p + "wv", L.wv);
    out.emplace_back(p + "bv", L.bv);
    out.emplace_back(p + "wo", L.wo);
    out.emplace_back(p + "bo", L.bo);
    out.emplace_back(p + "ln2_gain", L.ln2_gain);
    out.emplace_back(p + "ln2_shift", L.ln2_shift);
    out.emplace_back(p + "w1", L.w1);
    out.emplace_back(p + "b1", L.b1);
    out.emplace_back(p + "w2", L.w2);
    out.emplace_back(p + "b2", L.b2);
  }
  out.emplace_back(prefix + "final_gain", final_gain);
  out.emplace_back(prefix + "final_shift", final_shift);
}

Tensor CrossEncoder::encode(std::span<const TextPair> pairs, const EmbeddingTable& words, const ForwardContext& ctx,
                            AttentionTrace* trace) const {
  if (pairs.empty()) throw ValidationError("cross_encode: no pairs");
  if (words.dim() != config_.hidden) {
    throw ConfigError("word embedding width " + std::to_string(words.dim()) + " != encoder hidden " +
                      std::to_string(config_.hidden));
  }
  std::vector<std::int64_t> tokens, positions, segments, cls_rows;
  std::vector<std::size_t> offsets{0};
  for (const auto& pair : pairs) {
    auto in = build_pair_input(pair.resume, pair.jd, config_.max_tokens);
    cls_rows.push_back(static_cast<std::int64_t>(tokens.size()));
    for (std::size_t i = 0; i < in.tokens.size(); ++i) {
      tokens.push_back(in.tokens[i]);
      positions.push_back(static_cast<std::int64_t>(i));
      segments.push_back(in.segments[i]);
    }
    offsets.push_back(tokens.size());
  }

  auto drop = [&](const Tensor& t) { return ctx.dropout_active() ? ops::dropout(t, ctx.dropout, *ctx.rng) : t; };

  Tensor x = ops::add(ops::add(ops::gather_rows(words.table, tokens), ops::gather_rows(position, positions)),
                      ops::gather_rows(segment, segments));
  x = drop(x);
  if (trace) {
    trace->per_layer.clear();
    trace->offsets = offsets;
  }
  for (const auto& L : layers) {
    auto h = ops::layer_norm(x, L.ln1_gain, L.ln1_shift);
    auto q = ops::linear(h, L.wq, L.bq);
    auto k = ops::matmul(h, L.wk);
    auto v = ops::linear(h, L.wv, L.bv);
    std::vector<double>* weights = nullptr;
    if (trace) weights = &trace->per_layer.emplace_back();
    auto attended = ops::segment_attention(q, k, v, offsets, config_.heads, weights);
    x = ops::add(x, drop(ops::linear(attended, L.wo, L.bo)));
    auto h2 = ops::layer_norm(x, L.ln2_gain, L.ln2_shift);
    auto f = ops::linear(ops::gelu(ops::linear(h2, L.w1, L.b1)), L.w2, L.b2);
    x = ops::add(x, drop(f));
  }
  x = ops::layer_norm(x, final_gain, final_shift);
  return ops::gather_rows(x, cls_rows);
}

Tensor cross_encode(std::span<const TokenId> resume, std::span<const TokenId> jd, const CrossEncoder& encoder,
                    const EmbeddingTable& words, const ForwardContext& ctx) {
  const TextPair pair[] = {{resume, jd}};
  return encoder.encode(pair, words, ctx);
}

Tensor encode_job_desc(std::span<const TokenId> jd, const EmbeddingTable& words, const Tensor& projection) {
  if (jd.empty()) throw ValidationError("encode_job_desc: empty description");
  return ops::matmul(pool_tokens(jd, words), projection);
}

Tensor encode_job_descs(std::span<const std::vector<TokenId>> jds, const EmbeddingTable& words,
                        const Tensor& projection) {
  return ops::matmul(pool_token_sequences(jds, words), projection);
}

}  // namespace shpjf
