#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "domainbench/corpus.hpp"
#include "domainbench/embedding.hpp"
#include "domainbench/tokens.hpp"
#include "domainbench/wordlist.hpp"

namespace domainbench::prompts {

using tokens::TokenId;

struct MatchSpan {
  std::size_t start = 0;  // token index of the first target token
  std::size_t end = 0;    // one past the last target token
  std::string term;

  friend bool operator==(const MatchSpan&, const MatchSpan&) = default;
};

struct MatchOptions {
  std::size_t scan_start = 6;
  std::size_t min_context = 10;
};

/// Pass one records, for every position p >= scan_start, the longest run of
/// tokens [p, q) whose decoded text equals a word-list term and that ends on
/// a word boundary (the next token, if any, does not continue the word).
std::vector<MatchSpan> scan_matches(const std::vector<std::string>& token_strings, const wordlist::WordList& list,
                                    std::size_t scan_start);

/// Pass two keeps spans starting at or after min_context that have no
/// pass-one span ending exactly where they start.
std::vector<MatchSpan> find_matches(const std::vector<TokenId>& sentence_tokens, const wordlist::WordList& list,
                                    const tokens::Tokenizer& tokenizer, const MatchOptions& options = {});

struct PromptTarget {
  std::string keyword;
  wordlist::Method method = wordlist::Method::TF;
  std::string prompt;
  std::string target;
  std::string doc_id;
  int sent_index = 0;
  std::int64_t match_start = -1;  // -1 for imported pairs
  std::string seed_path;

  friend bool operator==(const PromptTarget&, const PromptTarget&) = default;
};

struct PairOptions {
  std::size_t n_pairs = 50;
  std::size_t min_context_tokens = 10;
  std::size_t min_context_chars = 40;
  std::size_t scan_start = 6;
};

struct PairStats {
  std::size_t sentences_scanned = 0;
  std::size_t sentences_without_match = 0;
  std::size_t rejected_char_floor = 0;
  std::size_t rejected_round_trip = 0;
  bool underfull = false;
};

/// Keyed PRNG derivation: the path string is hashed into a splitmix64 state.
std::string seed_path(std::uint64_t seed, wordlist::Method method, const std::string& keyword,
                      const std::string& doc_id, int sent_index);
/// Uniform index in [0, n) drawn from the generator keyed by `path`.
std::size_t keyed_choice(const std::string& path, std::size_t n);

/// Walks `matches` (map order) and emits at most one pair per sentence until
/// n_pairs is reached. Candidate spans must pass the character floor and the
/// token round trip before one is drawn.
std::vector<PromptTarget> build_pairs(const std::string& keyword, const std::vector<retrieval::SentenceMatch>& matches,
                                      const std::vector<corpus::CleanSentence>& sentences,
                                      const wordlist::WordList& list, const tokens::Tokenizer& tokenizer,
                                      std::uint64_t seed, const PairOptions& options = {}, PairStats* stats = nullptr);

void sort_pairs(std::vector<PromptTarget>& pairs);

/// Records {keyword, method, prompt, target, doc_id, sent_index, match_start,
/// seed_path} sorted by (keyword, doc_id, sent_index).
std::string pairs_to_jsonl(std::vector<PromptTarget> pairs);
std::vector<PromptTarget> load_pairs(const std::filesystem::path& path);
/// Externally authored benchmark in the pairs schema. Provenance fields are
/// optional and every pair is attributed to doc_id "external".
std::vector<PromptTarget> import_external_pairs(const std::filesystem::path& path, wordlist::Method method);

}  // namespace domainbench::prompts
