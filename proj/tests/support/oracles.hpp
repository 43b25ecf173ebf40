#pragma once

// Brute-force reference implementations. They deliberately share no code
// with the library beyond the public tokenizer interface.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "domainbench/prompts.hpp"
#include "domainbench/tokens.hpp"
#include "domainbench/wordlist.hpp"

namespace oracle {

/// Every adjacent word pair (a, b) of the corpus with
/// (count(ab) - min_count) * V / (count(a) * count(b)) > threshold, where V is
/// the number of distinct tokens. Enumerates all V^2 ordered pairs.
inline std::set<std::string> merged_pairs(const std::vector<std::vector<std::string>>& sentences,
                                          std::int64_t min_count, double threshold) {
  std::map<std::string, std::int64_t> unigram;
  for (const auto& s : sentences) {
    for (const auto& t : s) ++unigram[t];
  }
  auto is_word = [](const std::string& t) { return std::isalnum(static_cast<unsigned char>(t[0])) != 0; };
  const auto v = static_cast<double>(unigram.size());
  std::set<std::string> out;
  for (const auto& [a, ca] : unigram) {
    if (!is_word(a)) continue;
    for (const auto& [b, cb] : unigram) {
      if (!is_word(b)) continue;
      std::int64_t cab = 0;
      for (const auto& s : sentences) {
        for (std::size_t i = 0; i + 1 < s.size(); ++i) cab += (s[i] == a && s[i + 1] == b);
      }
      if (cab == 0) continue;
      const double score = static_cast<double>(cab - min_count) * v / (static_cast<double>(ca) * static_cast<double>(cb));
      if (score > threshold) out.insert(a + " " + b);
    }
  }
  return out;
}

struct Rational {
  std::int64_t num;
  std::int64_t den;
};

struct VectorizerOracle {
  std::vector<std::map<std::string, double>> weights;  // per document, retained terms only
  std::set<std::string> retained;
  std::map<std::string, std::int64_t> df;
};

/// Term counting via std::regex, df cuts compared in exact integer
/// arithmetic: keep iff min_df * N <= df <= max_df * N.
inline VectorizerOracle vectorize(const std::vector<std::string>& docs, bool tfidf, Rational min_df,
                                  Rational max_df) {
  static const std::regex term(R"(\s*[A-Za-z0-9_]+)");
  const auto n = static_cast<std::int64_t>(docs.size());
  std::vector<std::map<std::string, std::int64_t>> counts(docs.size());
  VectorizerOracle o;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (std::sregex_iterator it(docs[d].begin(), docs[d].end(), term), end; it != end; ++it) ++counts[d][it->str()];
    for (const auto& [t, c] : counts[d]) ++o.df[t];
  }
  for (const auto& [t, f] : o.df) {
    if (f * max_df.den <= max_df.num * n && f * min_df.den >= min_df.num * n) o.retained.insert(t);
  }
  o.weights.resize(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& [t, c] : counts[d]) {
      if (!o.retained.contains(t)) continue;
      double w = static_cast<double>(c);
      if (tfidf) {
        w *= std::log((1.0 + static_cast<double>(n)) / (1.0 + static_cast<double>(o.df.at(t)))) + 1.0;
      }
      o.weights[d][t] = w;
    }
  }
  return o;
}

/// Pass-one matches recomputed by brute force: for each p >= scan_start the
/// largest q whose decoded text is a term and that ends on a word boundary.
inline std::vector<std::pair<std::size_t, std::size_t>> pass_one(const std::vector<domainbench::tokens::TokenId>& ids,
                                                                 const std::set<std::string>& terms,
                                                                 const domainbench::tokens::Tokenizer& tok,
                                                                 std::size_t scan_start) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t p = scan_start; p < ids.size(); ++p) {
    for (std::size_t q = ids.size(); q > p; --q) {
      const std::string text = tok.decode(std::span(ids).subspan(p, q - p));
      if (!terms.contains(text)) continue;
      if (q < ids.size()) {
        const std::string next = tok.token_string(ids[q]);
        if (!next.empty() && (std::isalnum(static_cast<unsigned char>(next[0])) || next[0] == '_')) continue;
      }
      out.emplace_back(p, q);
      break;
    }
  }
  return out;
}

/// Names of the pair invariants a PromptTarget violates (empty when valid).
inline std::vector<std::string> prompt_violations(const domainbench::prompts::PromptTarget& pair,
                                                  const std::string& sentence,
                                                  const domainbench::wordlist::WordList& list,
                                                  const domainbench::tokens::Tokenizer& tok,
                                                  std::size_t min_tokens = 10, std::size_t min_chars = 40,
                                                  std::size_t scan_start = 6) {
  std::vector<std::string> v;
  std::set<std::string> terms;
  for (const auto& t : list.terms) terms.insert(t.surface);
  const auto prompt_ids = tok.encode(pair.prompt);
  if (prompt_ids.size() < min_tokens) v.push_back("min_tokens");
  if (pair.prompt.size() < min_chars) v.push_back("min_chars");
  if (pair.target.size() < 2 || pair.target[0] != ' ' || std::isspace(static_cast<unsigned char>(pair.target[1]))) {
    v.push_back("leading_space");
  }
  if (!terms.contains(pair.target)) v.push_back("target_in_list");
  if (sentence.compare(0, pair.prompt.size() + pair.target.size(), pair.prompt + pair.target) != 0) {
    v.push_back("prefix_of_sentence");
    return v;
  }
  const auto ids = tok.encode(sentence);
  const auto start = static_cast<std::size_t>(pair.match_start);
  if (pair.match_start < 0 || start != prompt_ids.size() || start > ids.size() ||
      !std::equal(prompt_ids.begin(), prompt_ids.end(), ids.begin())) {
    v.push_back("round_trip");
    return v;
  }
  if (tok.decode(std::span(ids).first(start)) != pair.prompt) v.push_back("round_trip");
  for (const auto& [p, q] : pass_one(ids, terms, tok, scan_start)) {
    if (q == start) v.push_back("adjacent_preceding_match");
    if (p == start && tok.decode(std::span(ids).subspan(p, q - p)) != pair.target) v.push_back("longest_match");
  }
  return v;
}

}  // namespace oracle
