#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "domainbench/http.hpp"
#include "domainbench/util.hpp"

namespace domainbench::tokens {

using TokenId = std::int32_t;

/// Model tokenizer contract. decode(encode(x)) must reproduce x.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string id() const = 0;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual std::string token_string(TokenId id) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

/// Byte-level pre-tokenization in the style of GPT-2 restricted to ASCII:
/// contractions, optional space plus a letter run, a digit run or a
/// punctuation run, and whitespace runs that leave their final space to the
/// following word.
std::vector<std::string> pretokenize(std::string_view text);

/// Deterministic local subword tokenizer. Pretokens of up to 8 bytes are
/// single pieces; longer pretokens are cut into 6-byte chunks. The vocabulary
/// is the 256 single bytes followed by every multi-byte piece seen in the
/// training texts, sorted. Unknown pieces fall back to bytes.
class PieceTokenizer final : public Tokenizer {
 public:
  static constexpr std::size_t kWholeLimit = 8;
  static constexpr std::size_t kChunk = 6;

  explicit PieceTokenizer(std::vector<std::string> pieces);
  static PieceTokenizer train(const std::vector<std::string>& texts);
  static PieceTokenizer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::string id() const override { return id_; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::string token_string(TokenId id) const override;
  std::size_t vocab_size() const override { return 256 + pieces_.size(); }

  /// Pieces a pretoken is cut into before vocabulary lookup.
  static std::vector<std::string> split_pretoken(std::string_view pretoken);

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
  std::string id_;
};

/// Client for the adapter's tokenizer: POST /tokenize {text} -> {ids} and
/// POST /tokenize {ids} -> {text}; identity and vocabulary size from GET /info.
class HttpTokenizer final : public Tokenizer {
 public:
  explicit HttpTokenizer(std::string base_url, http::RetryOptions options = {});
  std::string id() const override { return id_; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::string token_string(TokenId id) const override;
  std::size_t vocab_size() const override { return vocab_size_; }

 private:
  std::string base_url_;
  http::RetryOptions options_;
  std::string id_;
  std::size_t vocab_size_ = 0;
  mutable std::mutex mutex_;
  mutable std::unordered_map<TokenId, std::string> strings_;
};

struct TokenCount {
  std::string token;
  TokenId id = 0;
  std::int64_t count = 0;

  friend bool operator==(const TokenCount&, const TokenCount&) = default;
};

struct TokenList {
  std::string keyword;
  std::string tokenizer_id;
  std::size_t capacity = 5000;
  std::vector<TokenCount> tokens;  // count desc, then id asc

  /// Stripped token strings of the first `pool_size` entries.
  WordSet pool(std::size_t pool_size) const;
};

/// True when a token should not enter an attribute pool: its stripped,
/// lower-cased form is a stopword or at most two characters long.
bool is_filtered_token(std::string_view token, const WordSet& stopwords);

/// Throws NoSentences when `sentences` is empty.
TokenList profile_tokens(const std::string& keyword, const std::vector<std::string>& sentences,
                         const Tokenizer& tokenizer, const WordSet& stopwords, std::size_t capacity = 5000);

/// One record per keyword: {keyword, tokenizer_id, capacity, tokens: [[string, id, count]]}.
std::string token_lists_to_jsonl(const std::vector<TokenList>& lists);
std::vector<TokenList> load_token_lists(const std::filesystem::path& path);

/// Throws TokenizerMismatch unless every list was built with `expected`.
void require_tokenizer(const std::vector<TokenList>& lists, const std::string& expected);

}  // namespace domainbench::tokens
