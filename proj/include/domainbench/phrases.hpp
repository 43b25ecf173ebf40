#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "domainbench/embedding.hpp"
#include "domainbench/resources.hpp"

namespace domainbench::phrases {

/// Tokenizer used before phrase mining: lower-cases, drops bracketed content,
/// expands "n't", drops possessive "'s", keeps hyphenated words whole and
/// emits every other punctuation character as its own token.
std::vector<std::string> tokenize_for_mining(std::string_view sentence);

struct NGramCandidate {
  std::string surface;  // words joined by single spaces
  int n = 0;
  std::int64_t count = 0;
  double score = 0.0;

  friend bool operator==(const NGramCandidate&, const NGramCandidate&) = default;
};

struct MiningOptions {
  std::int64_t min_count = 5;
  double threshold = 10.0;
  int max_n = 7;
};

/// (count(ab) - min_count) * V / (count(a) * count(b)).
double collocation_score(std::int64_t count_ab, std::int64_t count_a, std::int64_t count_b,
                         std::int64_t vocab_size, std::int64_t min_count);

/// True for tokens that can take part in a phrase (start with a letter or
/// digit). Punctuation tokens never merge.
bool is_word_token(std::string_view token);

/// Iterative collocation merging. Each pass counts units and adjacent unit
/// pairs, records every pair whose score exceeds the threshold (and whose
/// combined length is at most max_n) as a candidate, then applies those
/// merges greedily left to right. Passes stop when nothing qualifies or after
/// max_n - 1 passes. A surface produced more than once keeps its highest
/// count. Output is sorted by (n, surface). Throws EmptyCorpus when the
/// stream has no word bigram at all.
std::vector<NGramCandidate> mine_phrases(const std::vector<std::vector<std::string>>& sentences,
                                         const MiningOptions& options = {});

class Lemmatizer {
 public:
  virtual ~Lemmatizer() = default;
  virtual std::string lemma(std::string_view word) const = 0;
};

/// Exception table first, then noun-plural suffix rules.
class DictionaryLemmatizer final : public Lemmatizer {
 public:
  explicit DictionaryLemmatizer(std::map<std::string, std::string, std::less<>> exceptions);
  std::string lemma(std::string_view word) const override;

 private:
  std::map<std::string, std::string, std::less<>> exceptions_;
};

/// ^[a-z]+(-[a-z]+)*$
bool is_valid_keyword_word(std::string_view word);

std::vector<NGramCandidate> filter_candidates(const std::vector<NGramCandidate>& candidates,
                                              const FilterLists& filters, const Lemmatizer& lemmatizer);

struct Keyword {
  std::string surface;
  int n = 0;
  int rank_within_n = 0;
  std::int64_t count = 0;
  double score = 0.0;

  friend bool operator==(const Keyword&, const Keyword&) = default;
};

/// Buckets are n = 2, 3, 4 and 5+.
inline constexpr std::size_t kBuckets = 4;
std::size_t bucket_of(int n);

struct SelectionOptions {
  int target_count = 300;
  std::array<double, kBuckets> proportions{0.50, 0.30, 0.15, 0.05};
};

struct Selection {
  std::vector<Keyword> keywords;  // sorted by (n, rank_within_n)
  std::array<int, kBuckets> initial_quotas{};
  std::array<int, kBuckets> final_quotas{};
  bool insufficient = false;
  std::vector<std::string> warnings;
};

/// Largest-remainder apportionment of `total` across `weights`; remainder
/// ties go to the lower index.
std::vector<int> largest_remainder(const std::vector<double>& weights, int total);

Selection select_keywords(const std::vector<NGramCandidate>& candidates, const SelectionOptions& options = {});

/// Pairwise deduplication over unit vectors aligned with `keywords`. Pairs are
/// visited in lexicographic order of surfaces; for a pair above the threshold
/// the shorter surface survives, then the one with the higher mean similarity
/// to the rest of its single-link cluster, then the lexicographically smaller.
std::vector<Keyword> dedup_keywords(const std::vector<Keyword>& keywords,
                                    const std::vector<retrieval::EmbeddingVector>& vectors,
                                    double sim_threshold = 0.85);

std::vector<Keyword> dedup_keywords(const std::vector<Keyword>& keywords, retrieval::Embedder& embedder,
                                    double sim_threshold = 0.85);

/// Re-assigns contiguous ranks within each n (in current order) and sorts by
/// (n, rank_within_n).
void rerank(std::vector<Keyword>& keywords);

std::string keywords_to_jsonl(const std::vector<Keyword>& keywords);
std::vector<Keyword> load_keywords(const std::filesystem::path& path);

}  // namespace domainbench::phrases
