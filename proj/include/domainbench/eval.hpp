#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "domainbench/http.hpp"
#include "domainbench/prompts.hpp"
#include "domainbench/tokens.hpp"

namespace domainbench::eval {

using tokens::TokenId;

struct ScoreReply {
  std::vector<std::int64_t> ranks;
  std::vector<double> probs;
};

struct TopK {
  std::vector<TokenId> ids;
  std::vector<double> probs;
};

/// Next-token scoring contract. Ranks follow the tie rule
/// rank(t) = 1 + |{t' : p(t') > p(t)}|. Implementations must be safe to call
/// from several threads at once.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string model_id() const = 0;
  virtual std::size_t context_limit() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::string tokenizer_id() const = 0;
  virtual ScoreReply score(std::span<const TokenId> prefix, std::span<const TokenId> query) const = 0;
  virtual TopK topk(std::span<const TokenId> prefix, std::size_t k) const = 0;
};

/// Rank of `id` within `probs` under the tie rule.
std::int64_t tie_rank(std::span<const double> probs, TokenId id);
/// Highest-probability ids, ties by ascending id.
TopK top_k_of(std::span<const double> probs, std::size_t k);

/// Scorer backed by a full next-token distribution.
class DistributionScorer : public Scorer {
 public:
  struct Info {
    std::string model_id;
    std::size_t context_limit = 1024;
    std::size_t vocab_size = 0;
    std::string tokenizer_id;
  };
  explicit DistributionScorer(Info info) : info_(std::move(info)) {}

  std::string model_id() const override { return info_.model_id; }
  std::size_t context_limit() const override { return info_.context_limit; }
  std::size_t vocab_size() const override { return info_.vocab_size; }
  std::string tokenizer_id() const override { return info_.tokenizer_id; }
  ScoreReply score(std::span<const TokenId> prefix, std::span<const TokenId> query) const override;
  TopK topk(std::span<const TokenId> prefix, std::size_t k) const override;

  virtual std::vector<double> distribution(std::span<const TokenId> prefix) const = 0;

 private:
  Info info_;
};

/// Distribution supplied by a callable; used for table-driven mocks.
class FunctionScorer final : public DistributionScorer {
 public:
  using Fn = std::function<std::vector<double>(std::span<const TokenId>)>;
  FunctionScorer(Info info, Fn fn) : DistributionScorer(std::move(info)), fn_(std::move(fn)) {}
  std::vector<double> distribution(std::span<const TokenId> prefix) const override { return fn_(prefix); }

 private:
  Fn fn_;
};

/// Additively smoothed bigram model over token ids:
/// p(w | v) = (c(v, w) + beta) / (c(v) + beta * V), with v the previous token
/// or the begin-of-text marker for an empty prefix.
class BigramScorer final : public DistributionScorer {
 public:
  BigramScorer(Info info, const std::vector<std::vector<TokenId>>& streams, double beta);
  std::vector<double> distribution(std::span<const TokenId> prefix) const override;

 private:
  double beta_;
  std::map<TokenId, std::map<TokenId, std::int64_t>> counts_;
  std::map<TokenId, std::int64_t> totals_;
};

/// Client for POST /score, POST /topk and GET /info.
class HttpScorer final : public Scorer {
 public:
  explicit HttpScorer(std::string base_url, http::RetryOptions options = {});
  std::string model_id() const override { return model_id_; }
  std::size_t context_limit() const override { return context_limit_; }
  std::size_t vocab_size() const override { return vocab_size_; }
  std::string tokenizer_id() const override { return tokenizer_id_; }
  ScoreReply score(std::span<const TokenId> prefix, std::span<const TokenId> query) const override;
  TopK topk(std::span<const TokenId> prefix, std::size_t k) const override;

 private:
  std::string base_url_;
  http::RetryOptions options_;
  std::string model_id_;
  std::string tokenizer_id_;
  std::size_t context_limit_ = 0;
  std::size_t vocab_size_ = 0;
};

struct ScoreRecord {
  std::size_t pair_id = 0;
  std::string keyword;
  std::string target;
  std::vector<std::int64_t> ranks;
  std::vector<double> probs;
  double mean_rank = 0.0;
  double mean_prob = 0.0;
};

/// Teacher-forced scoring of target ids after prompt ids. Throws
/// ContextOverflow when prompt plus target exceed the scorer's limit.
ScoreRecord score_target(const Scorer& scorer, std::span<const TokenId> prompt, std::span<const TokenId> target);

struct EncodedPair {
  std::vector<TokenId> prompt;
  std::vector<TokenId> target;
};

/// Target ids are taken from encoding prompt + target when that encoding
/// extends the prompt's own ids, otherwise from encoding the target alone.
EncodedPair encode_pair(const prompts::PromptTarget& pair, const tokens::Tokenizer& tokenizer);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Summary {
  std::string model_id;
  std::string method;
  std::size_t n_pairs = 0;
  double mean_rank = 0.0;
  Interval mean_rank_ci;
  double median_rank = 0.0;
  Interval median_rank_ci;
  double mean_prob = 0.0;
  double median_prob = 0.0;
};

/// Lower middle element for even sizes.
double lower_median(std::vector<double> values);
/// 1-based order-statistic indices (l, n - l + 1) bracketing the median at
/// 95%: l is the largest index with P(Bin(n, 1/2) <= l - 1) <= 0.025. When no
/// such l exists the full range (1, n) is returned.
std::pair<std::size_t, std::size_t> median_ci_indices(std::size_t n);
Interval median_ci(std::vector<double> values);
Interval mean_ci(const std::vector<double>& values);

/// Throws InsufficientRecords for fewer than two records.
Summary summarize(const std::vector<ScoreRecord>& records, const std::string& model_id = {},
                  const std::string& method = {});

/// Non-overlapping windows; the first token of each window is conditioned on
/// the empty prefix.
double perplexity(const Scorer& scorer, const std::vector<TokenId>& stream, std::size_t window);

struct ContextFilter {
  std::vector<std::size_t> kept;      // indices into the pair list
  std::vector<std::size_t> excluded;  // exceed the smallest context limit
};

ContextFilter filter_by_context(const std::vector<EncodedPair>& pairs, std::size_t min_context_limit);

struct EvalResult {
  std::string model_id;
  std::vector<ScoreRecord> records;  // sorted by pair_id
  std::vector<std::pair<std::size_t, std::string>> failures;
  std::size_t attempted = 0;
  bool invalid = false;  // failure rate above the allowed fraction
};

/// Scores every kept pair against one model. Pair ids are positions in
/// `pairs`.
EvalResult evaluate(const Scorer& scorer, const std::vector<prompts::PromptTarget>& pairs,
                    const std::vector<EncodedPair>& encoded, const std::vector<std::size_t>& kept,
                    unsigned threads = 1, double max_failure_rate = 0.01);

json to_json(const ScoreRecord& r);
ScoreRecord record_from_json(const json& j);
json to_json(const Summary& s);
std::vector<ScoreRecord> load_records(const std::filesystem::path& path);

}  // namespace domainbench::eval
