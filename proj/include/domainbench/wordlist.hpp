#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "domainbench/corpus.hpp"
#include "domainbench/embedding.hpp"
#include "domainbench/util.hpp"

namespace domainbench::wordlist {

enum class Method { TF, TFIDF };

std::string method_name(Method m);  // "tf" / "tfidf"
Method parse_method(std::string_view name);
double default_max_df(Method m);

struct KeywordDocument {
  std::string keyword;
  std::string text;
};

/// One document per keyword with at least one matched sentence: the matched
/// sentence texts in map order, joined by single spaces.
std::vector<KeywordDocument> build_keyword_documents(const retrieval::KeywordSentenceMap& map,
                                                     const std::vector<corpus::CleanSentence>& sentences);

/// Optional leading whitespace followed by a maximal run of [A-Za-z0-9_].
/// The whitespace is part of the token; case is preserved.
std::vector<std::string> extract_terms(std::string_view text);

/// Sparse document-term weights. Row d lists (term index, weight) for every
/// retained term occurring in document d, ordered by term index.
struct WeightMatrix {
  Method method = Method::TF;
  std::size_t n_docs = 0;
  std::vector<std::string> vocabulary;  // sorted
  std::vector<std::int64_t> df;         // aligned with vocabulary
  std::vector<double> idf;              // aligned with vocabulary; all 1 for TF
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;

  std::vector<std::pair<std::string, double>> row_terms(std::size_t doc) const;
};

/// Terms with df < min_df*N or df > max_df*N are dropped. TF weights are raw
/// counts; TF-IDF weights are count * (ln((1+N)/(1+df)) + 1). No row
/// normalization is applied.
WeightMatrix vectorize(const std::vector<std::string>& docs, Method method, double min_df, double max_df);

struct Term {
  std::string surface;  // with its single leading space
  double score = 0.0;
  double cosine = 0.0;

  std::string core() const { return surface.substr(1); }
  friend bool operator==(const Term&, const Term&) = default;
};

struct WordList {
  std::string keyword;
  Method method = Method::TF;
  std::vector<Term> terms;  // score desc, then surface asc
};

/// Drops zero scores, stopwords, short cores, non-alphanumeric cores and
/// anything without exactly one leading space.
std::vector<Term> structural_filter(const std::vector<std::pair<std::string, double>>& scored,
                                    const WordSet& stopwords);

/// Keeps terms scoring at least the mean of the given set. The comparison
/// carries a 1e-12 relative slack so a uniformly rescaled column selects the
/// same terms despite rounding in the mean.
std::vector<Term> mean_threshold(const std::vector<Term>& terms);

void sort_terms(std::vector<Term>& terms);

/// Full per-keyword pipeline. Throws EmptyWordList when nothing survives.
WordList build_wordlist(const std::vector<std::pair<std::string, double>>& row, const std::string& keyword,
                        Method method, retrieval::Embedder& embedder, const WordSet& stopwords,
                        double sim_threshold = 0.3);

struct BuildResult {
  std::vector<WordList> lists;          // keyword order
  std::vector<std::string> warnings;    // keywords with empty lists
};

BuildResult build_wordlists(const std::vector<KeywordDocument>& docs, Method method, double min_df, double max_df,
                            retrieval::Embedder& embedder, const WordSet& stopwords, double sim_threshold = 0.3);

/// Records {keyword, term, score, cosine} sorted by (keyword, score desc, term).
std::string wordlists_to_jsonl(const std::vector<WordList>& lists);
std::vector<WordList> load_wordlists(const std::filesystem::path& path, Method method);

}  // namespace domainbench::wordlist
