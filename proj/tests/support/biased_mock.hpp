#pragma once

// Table-driven mock language models with a tunable preference for word-list
// tokens. The base distribution is pseudo-random per (seed, previous token);
// a fraction `bias` of the mass is moved uniformly onto the word-list ids.

#include <cstdint>
#include <memory>
#include <set>
#include <vector>

#include "domainbench/eval.hpp"
#include "domainbench/prompts.hpp"
#include "domainbench/tokens.hpp"
#include "prompt_fuzz.hpp"

namespace testsupport {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::unique_ptr<domainbench::eval::FunctionScorer> biased_scorer(const std::string& model_id,
                                                                        std::size_t vocab,
                                                                        std::set<domainbench::tokens::TokenId> list_ids,
                                                                        double bias, std::uint64_t seed,
                                                                        const std::string& tokenizer_id = "") {
  using domainbench::tokens::TokenId;
  domainbench::eval::DistributionScorer::Info info{model_id, 4096, vocab, tokenizer_id};
  auto fn = [vocab, list_ids = std::move(list_ids), bias, seed](std::span<const TokenId> prefix) {
    const std::uint64_t ctx = prefix.empty() ? 0x5eedULL : static_cast<std::uint64_t>(prefix.back()) + 1;
    std::vector<double> p(vocab);
    double total = 0.0;
    for (std::size_t i = 0; i < vocab; ++i) {
      p[i] = static_cast<double>(mix64(seed * 0x100000001B3ULL ^ (ctx << 20) ^ i) >> 11) * 0x1.0p-53;
      total += p[i];
    }
    for (auto& x : p) x = (1.0 - bias) * x / total;
    for (auto id : list_ids) p[static_cast<std::size_t>(id)] += bias / static_cast<double>(list_ids.size());
    return p;
  };
  return std::make_unique<domainbench::eval::FunctionScorer>(info, fn);
}

struct OrderingOutcome {
  std::vector<double> medians;  // one per bias, in the order given
  std::size_t pairs = 0;
};

/// Builds a random corpus and word list from `seed`, constructs pairs, and
/// returns the median rank of the targets under each bias level.
inline OrderingOutcome median_ranks_by_bias(std::uint64_t seed, const std::vector<double>& biases) {
  using namespace domainbench;
  const auto c = make_prompt_fuzz_case(seed, 120);
  auto texts = c.tokenizer_texts;
  for (const auto& t : c.list.terms) texts.push_back(t.surface);
  const auto tok = tokens::PieceTokenizer::train(texts);
  prompts::PairOptions opt;
  opt.n_pairs = 1000;
  const auto pairs = prompts::build_pairs(c.list.keyword, c.matches, c.sentences, c.list, tok, seed, opt);
  std::set<tokens::TokenId> list_ids;
  for (const auto& t : c.list.terms) {
    for (auto id : tok.encode(t.surface)) list_ids.insert(id);
  }
  std::vector<eval::EncodedPair> encoded;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    encoded.push_back(eval::encode_pair(pairs[i], tok));
    kept.push_back(i);
  }
  OrderingOutcome out;
  out.pairs = pairs.size();
  for (double b : biases) {
    const auto scorer = biased_scorer("bias", tok.vocab_size(), list_ids, b, seed, tok.id());
    const auto result = eval::evaluate(*scorer, pairs, encoded, kept);
    out.medians.push_back(eval::summarize(result.records).median_rank);
  }
  return out;
}

}  // namespace testsupport
