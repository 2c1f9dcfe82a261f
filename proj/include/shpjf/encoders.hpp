#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "shpjf/types.hpp"

namespace shpjf {

/// Token <-> ID map with four reserved specials.
class Vocabulary {
 public:
  static constexpr TokenId kCls = 0;
  static constexpr TokenId kSep = 1;
  static constexpr TokenId kPad = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kReserved = 4;

  Vocabulary();

  TokenId add(const std::string& token);
  // UNK for unknown tokens.
  TokenId id(const std::string& token) const;
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }

  // Whitespace tokenization.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  // One non-special token per line; line i holds ID i + 4.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

enum class EmbeddingKind { word, job_id, user_id };

struct EmbeddingTable {
  Tensor table;  // [V x d]
  EmbeddingKind kind = EmbeddingKind::word;

  std::size_t size() const { return table.rows(); }
  std::size_t dim() const { return table.cols(); }
};

EmbeddingTable make_embedding(std::size_t count, std::size_t dim, EmbeddingKind kind, std::mt19937_64& rng,
                              double stddev = 0.1);

/// Row i of the result is table row ids[i]. Throws LookupError naming the ID
/// when it is out of range.
Tensor embed_ids(std::span<const std::int64_t> ids, const EmbeddingTable& table);

/// Mean of the non-PAD token embeddings, as a [1 x d] row.
Tensor pool_tokens(std::span<const TokenId> tokens, const EmbeddingTable& words);

/// Batched pool_tokens: row s is the pooled embedding of sequences[s].
Tensor pool_token_sequences(std::span<const std::vector<TokenId>> sequences, const EmbeddingTable& words);

struct CrossEncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t hidden = 128;
  std::size_t feed_forward = 256;
  std::size_t max_tokens = 64;

  void validate() const;
};

/// [CLS] resume [SEP] jd after joint truncation, with segment IDs (0 for the
/// CLS/resume/SEP prefix, 1 for the description).
struct PairInput {
  std::vector<TokenId> tokens;
  std::vector<std::int64_t> segments;
  std::size_t resume_kept = 0;
  std::size_t jd_kept = 0;
};

/// Keeps CLS and SEP and splits the remaining max_tokens - 2 slots between
/// the segments in proportion to their lengths (each keeps at least one).
PairInput build_pair_input(std::span<const TokenId> resume, std::span<const TokenId> jd, std::size_t max_tokens);

struct TextPair {
  std::span<const TokenId> resume;
  std::span<const TokenId> jd;
};

/// Attention probabilities of the last encode() call, one buffer per layer
/// (see ops::segment_attention for the layout), plus the segment offsets.
struct AttentionTrace {
  std::vector<std::vector<double>> per_layer;
  std::vector<std::size_t> offsets;
};

struct EncoderLayer {
  Tensor ln1_gain, ln1_shift;
  Tensor wq, bq, wk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_shift;
  Tensor w1, b1, w2, b2;
};

/// Small pre-norm transformer over a jointly encoded (resume, jd) pair.
/// Word embeddings are owned by the caller and shared with the other
/// text paths of the model.
class CrossEncoder {
 public:
  CrossEncoder() = default;
  CrossEncoder(const CrossEncoderConfig& config, std::mt19937_64& rng);

  /// Hidden state at the CLS position for every pair: [P x hidden].
  Tensor encode(std::span<const TextPair> pairs, const EmbeddingTable& words, const ForwardContext& ctx,
                AttentionTrace* trace = nullptr) const;

  const CrossEncoderConfig& config() const { return config_; }
  void collect(NamedParams& out, const std::string& prefix) const;

  Tensor position;  // [max_tokens x hidden]
  Tensor segment;   // [2 x hidden]
  std::vector<EncoderLayer> layers;
  Tensor final_gain, final_shift;

 private:
  CrossEncoderConfig config_;
};

/// o_T for a single pair as a [1 x hidden] row.
Tensor cross_encode(std::span<const TokenId> resume, std::span<const TokenId> jd, const CrossEncoder& encoder,
                    const EmbeddingTable& words, const ForwardContext& ctx = {});

/// Job description representation: mean-pooled words projected into the
/// ID-embedding space by `projection` [d_w x d_j]. Returns [1 x d_j].
Tensor encode_job_desc(std::span<const TokenId> jd, const EmbeddingTable& words, const Tensor& projection);

/// Batched encode_job_desc, one row per description.
Tensor encode_job_descs(std::span<const std::vector<TokenId>> jds, const EmbeddingTable& words,
                        const Tensor& projection);

}  // namespace shpjf
