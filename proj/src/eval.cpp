#include "domainbench/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/binomial.hpp>

#include "domainbench/errors.hpp"

namespace domainbench::eval {

std::int64_t tie_rank(std::span<const double> probs, TokenId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= probs.size()) {
    throw TokenizerMismatch("token id " + std::to_string(id) + " outside scorer vocabulary");
  }
  const double p = probs[static_cast<std::size_t>(id)];
  return 1 + std::count_if(probs.begin(), probs.end(), [p](double q) { return q > p; });
}

TopK top_k_of(std::span<const double> probs, std::size_t k) {
  std::vector<TokenId> ids(probs.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  auto better = [&](TokenId a, TokenId b) {
    if (probs[static_cast<std::size_t>(a)] != probs[static_cast<std::size_t>(b)]) {
      return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    }
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);
  ids.resize(k);
  TopK out;
  out.ids = ids;
  for (auto id : ids) out.probs.push_back(probs[static_cast<std::size_t>(id)]);
  return out;
}

ScoreReply DistributionScorer::score(std::span<const TokenId> prefix, std::span<const TokenId> query) const {
  const auto dist = distribution(prefix);
  ScoreReply r;
  for (auto id : query) {
    r.ranks.push_back(tie_rank(dist, id));
    r.probs.push_back(dist[static_cast<std::size_t>(id)]);
  }
  return r;
}

TopK DistributionScorer::topk(std::span<const TokenId> prefix, std::size_t k) const {
  return top_k_of(distribution(prefix), k);
}

// ---- bigram --------------------------------------------------------------

namespace {
constexpr TokenId kBos = -1;
}

BigramScorer::BigramScorer(Info info, const std::vector<std::vector<TokenId>>& streams, double beta)
    : DistributionScorer(std::move(info)), beta_(beta) {
  if (!(beta > 0.0)) throw ConfigInvalid("bigram smoothing must be positive");
  for (const auto& s : streams) {
    TokenId prev = kBos;
    for (auto id : s) {
      ++counts_[prev][id];
      ++totals_[prev];
      prev = id;
    }
  }
}

std::vector<double> BigramScorer::distribution(std::span<const TokenId> prefix) const {
  const std::size_t v = vocab_size();
  const TokenId prev = prefix.empty() ? kBos : prefix.back();
  std::int64_t total = 0;
  if (auto t = totals_.find(prev); t != totals_.end()) total = t->second;
  const double denom = static_cast<double>(total) + beta_ * static_cast<double>(v);
  std::vector<double> dist(v, beta_ / denom);
  if (auto row = counts_.find(prev); row != counts_.end()) {
    for (const auto& [id, c] : row->second) {
      if (static_cast<std::size_t>(id) < v) dist[static_cast<std::size_t>(id)] = (static_cast<double>(c) + beta_) / denom;
    }
  }
  return dist;
}

// ---- HTTP ----------------------------------------------------------------

HttpScorer::HttpScorer(std::string base_url, http::RetryOptions options)
    : base_url_(std::move(base_url)), options_(options) {
  try {
    const auto info = http::request(base_url_, "/info", json(), options_);
    model_id_ = info.at("model_id").get<std::string>();
    vocab_size_ = info.at("vocab_size").get<std::size_t>();
    context_limit_ = info.at("context_limit").get<std::size_t>();
    tokenizer_id_ = info.at("tokenizer_id").get<std::string>();
  } catch (const http::ServiceError& e) {
    throw ScorerUnavailable(e.what());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("/info reply: ") + e.what());
  }
}

ScoreReply HttpScorer::score(std::span<const TokenId> prefix, std::span<const TokenId> query) const {
  const json body{{"model_id", model_id_},
                  {"prefix_ids", std::vector<TokenId>(prefix.begin(), prefix.end())},
                  {"query_ids", std::vector<TokenId>(query.begin(), query.end())}};
  try {
    const auto reply = http::request(base_url_, "/score", body, options_);
    ScoreReply r{reply.at("ranks").get<std::vector<std::int64_t>>(), reply.at("probs").get<std::vector<double>>()};
    if (r.ranks.size() != query.size() || r.probs.size() != query.size()) {
      throw ScorerUnavailable("/score returned a reply of the wrong length");
    }
    return r;
  } catch (const http::ServiceError& e) {
    if (e.status() == 413) throw ContextOverflow(e.what());
    throw ScorerUnavailable(e.what());
  } catch (const json::exception& e) {
    throw ScorerUnavailable(std::string("/score reply: ") + e.what());
  }
}

TopK HttpScorer::topk(std::span<const TokenId> prefix, std::size_t k) const {
  const json body{{"prefix_ids", std::vector<TokenId>(prefix.begin(), prefix.end())}, {"k", k}};
  try {
    const auto reply = http::request(base_url_, "/topk", body, options_);
    TopK t{reply.at("ids").get<std::vector<TokenId>>(), reply.at("probs").get<std::vector<double>>()};
    if (t.ids.size() != t.probs.size()) throw ScorerUnavailable("/topk ids and probs differ in length");
    return t;
  } catch (const http::ServiceError& e) {
    if (e.status() == 413) throw ContextOverflow(e.what());
    throw ScorerUnavailable(e.what());
  } catch (const json::exception& e) {
    throw ScorerUnavailable(std::string("/topk reply: ") + e.what());
  }
}

// ---- scoring -------------------------------------------------------------

ScoreRecord score_target(const Scorer& scorer, std::span<const TokenId> prompt, std::span<const TokenId> target) {
  if (target.empty()) throw SchemaError("target encodes to no tokens");
  if (prompt.size() + target.size() > scorer.context_limit()) {
    throw ContextOverflow("prompt and target need " + std::to_string(prompt.size() + target.size()) +
                          " tokens, limit is " + std::to_string(scorer.context_limit()));
  }
  ScoreRecord r;
  std::vector<TokenId> prefix(prompt.begin(), prompt.end());
  for (auto t : target) {
    const TokenId q[1] = {t};
    const auto reply = scorer.score(prefix, q);
    r.ranks.push_back(reply.ranks.at(0));
    r.probs.push_back(reply.probs.at(0));
    prefix.push_back(t);
  }
  double rank_sum = 0.0;
  double prob_sum = 0.0;
  for (std::size_t i = 0; i < r.ranks.size(); ++i) {
    rank_sum += static_cast<double>(r.ranks[i]);
    prob_sum += r.probs[i];
  }
  r.mean_rank = rank_sum / static_cast<double>(r.ranks.size());
  r.mean_prob = prob_sum / static_cast<double>(r.probs.size());
  return r;
}

EncodedPair encode_pair(const prompts::PromptTarget& pair, const tokens::Tokenizer& tokenizer) {
  EncodedPair e;
  e.prompt = tokenizer.encode(pair.prompt);
  const auto full = tokenizer.encode(pair.prompt + pair.target);
  if (full.size() > e.prompt.size() && std::equal(e.prompt.begin(), e.prompt.end(), full.begin())) {
    e.target.assign(full.begin() + static_cast<std::ptrdiff_t>(e.prompt.size()), full.end());
  } else {
    e.target = tokenizer.encode(pair.target);
  }
  return e;
}

// ---- aggregation ---------------------------------------------------------

double lower_median(std::vector<double> values) {
  if (values.empty()) throw InsufficientRecords("median of an empty set");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

std::pair<std::size_t, std::size_t> median_ci_indices(std::size_t n) {
  if (n == 0) throw InsufficientRecords("median interval of an empty set");
  const boost::math::binomial_distribution<double> bin(static_cast<double>(n), 0.5);
  std::size_t best = 0;
  for (std::size_t l = 1; 2 * l <= n + 1; ++l) {
    if (boost::math::cdf(bin, static_cast<double>(l - 1)) <= 0.025) {
      best = l;
    } else {
      break;
    }
  }
  if (best == 0) return {1, n};
  return {best, n - best + 1};
}

Interval median_ci(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto [lo, hi] = median_ci_indices(values.size());
  return {values[lo - 1], values[hi - 1]};
}

Interval mean_ci(const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) throw InsufficientRecords("mean interval needs two values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return {mean - half, mean + half};
}

Summary summarize(const std::vector<ScoreRecord>& records, const std::string& model_id, const std::string& method) {
  if (records.size() < 2) throw InsufficientRecords("summary needs at least two scored pairs");
  std::vector<double> ranks;
  std::vector<double> probs;
  for (const auto& r : records) {
    ranks.push_back(r.mean_rank);
    probs.push_back(r.mean_prob);
  }
  // Sorting first fixes the summation order, so any permutation of the input
  // produces bit-identical sums.
  std::sort(ranks.begin(), ranks.end());
  std::sort(probs.begin(), probs.end());
  Summary s;
  s.model_id = model_id;
  s.method = method;
  s.n_pairs = records.size();
  s.mean_rank = std::accumulate(ranks.begin(), ranks.end(), 0.0) / static_cast<double>(ranks.size());
  s.mean_rank_ci = mean_ci(ranks);
  s.median_rank = lower_median(ranks);
  s.median_rank_ci = median_ci(ranks);
  s.mean_prob = std::accumulate(probs.begin(), probs.end(), 0.0) / static_cast<double>(probs.size());
  s.median_prob = lower_median(probs);
  return s;
}

double perplexity(const Scorer& scorer, const std::vector<TokenId>& stream, std::size_t window) {
  if (stream.empty()) throw EmptyCorpus("perplexity over an empty token stream");
  if (window == 0 || window > scorer.context_limit()) {
    throw ContextOverflow("perplexity window " + std::to_string(window) + " outside (0, " +
                          std::to_string(scorer.context_limit()) + "]");
  }
  double nll = 0.0;
  for (std::size_t start = 0; start < stream.size(); start += window) {
    const std::size_t end = std::min(stream.size(), start + window);
    for (std::size_t i = start; i < end; ++i) {
      const std::span<const TokenId> prefix(stream.data() + start, i - start);
      const TokenId q[1] = {stream[i]};
      const double p = scorer.score(prefix, q).probs.at(0);
      nll -= std::log(p);
    }
  }
  return std::exp(nll / static_cast<double>(stream.size()));
}

ContextFilter filter_by_context(const std::vector<EncodedPair>& pairs, std::size_t min_context_limit) {
  ContextFilter f;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool fits = !pairs[i].target.empty() && pairs[i].prompt.size() + pairs[i].target.size() <= min_context_limit;
    (fits ? f.kept : f.excluded).push_back(i);
  }
  return f;
}

EvalResult evaluate(const Scorer& scorer, const std::vector<prompts::PromptTarget>& pairs,
                    const std::vector<EncodedPair>& encoded, const std::vector<std::size_t>& kept, unsigned threads,
                    double max_failure_rate) {
  EvalResult result;
  result.model_id = scorer.model_id();
  result.attempted = kept.size();
  std::vector<std::optional<ScoreRecord>> slots(kept.size());
  std::vector<std::string> errors(kept.size());
  parallel_for(kept.size(), threads, [&](std::size_t i) {
    const std::size_t id = kept[i];
    try {
      auto r = score_target(scorer, encoded.at(id).prompt, encoded.at(id).target);
      r.pair_id = id;
      r.keyword = pairs.at(id).keyword;
      r.target = pairs.at(id).target;
      slots[i] = std::move(r);
    } catch (const ScorerUnavailable& e) {
      errors[i] = e.what();
    } catch (const ContextOverflow& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (slots[i]) {
      result.records.push_back(std::move(*slots[i]));
    } else {
      result.failures.emplace_back(kept[i], errors[i]);
    }
  }
  result.invalid = !kept.empty() && static_cast<double>(result.failures.size()) >
                                        max_failure_rate * static_cast<double>(kept.size());
  return result;
}

// ---- serialization -------------------------------------------------------

json to_json(const ScoreRecord& r) {
  return json{{"pair_id", r.pair_id}, {"keyword", r.keyword},     {"target", r.target},
              {"ranks", r.ranks},     {"probs", r.probs},         {"mean_rank", r.mean_rank},
              {"mean_prob", r.mean_prob}};
}

ScoreRecord record_from_json(const json& j) {
  ScoreRecord r;
  r.pair_id = j.at("pair_id").get<std::size_t>();
  r.keyword = j.at("keyword").get<std::string>();
  r.target = j.at("target").get<std::string>();
  r.ranks = j.at("ranks").get<std::vector<std::int64_t>>();
  r.probs = j.at("probs").get<std::vector<double>>();
  r.mean_rank = j.at("mean_rank").get<double>();
  r.mean_prob = j.at("mean_prob").get<double>();
  return r;
}

json to_json(const Summary& s) {
  return json{{"model_id", s.model_id},
              {"method", s.method},
              {"n_pairs", s.n_pairs},
              {"mean_rank", s.mean_rank},
              {"mean_rank_ci", {s.mean_rank_ci.lo, s.mean_rank_ci.hi}},
              {"median_rank", s.median_rank},
              {"median_rank_ci", {s.median_rank_ci.lo, s.median_rank_ci.hi}},
              {"mean_prob", s.mean_prob},
              {"median_prob", s.median_prob}};
}

std::vector<ScoreRecord> load_records(const std::filesystem::path& path) {
  std::vector<ScoreRecord> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back(record_from_json(j));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace domainbench::eval
