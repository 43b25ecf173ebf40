#include "domainbench/wordlist.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "domainbench/errors.hpp"

namespace domainbench::wordlist {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string method_name(Method m) { return m == Method::TF ? "tf" : "tfidf"; }

Method parse_method(std::string_view name) {
  const std::string lower = to_lower(name);
  if (lower == "tf") return Method::TF;
  if (lower == "tfidf" || lower == "tf-idf") return Method::TFIDF;
  throw ConfigInvalid("unknown word-list method '" + std::string(name) + "'");
}

double default_max_df(Method m) { return m == Method::TF ? 0.80 : 0.50; }

std::vector<KeywordDocument> build_keyword_documents(const retrieval::KeywordSentenceMap& map,
                                                     const std::vector<corpus::CleanSentence>& sentences) {
  std::map<std::pair<std::string_view, int>, const std::string*> by_key;
  for (const auto& s : sentences) by_key[{s.doc_id, s.sent_index}] = &s.text;
  std::vector<KeywordDocument> docs;
  for (const auto& [keyword, matches] : map) {
    std::vector<std::string> parts;
    for (const auto& m : matches) {
      auto it = by_key.find({m.doc_id, m.sent_index});
      if (it != by_key.end()) parts.push_back(*it->second);
    }
    if (!parts.empty()) docs.push_back({keyword, join(parts, " ")});
  }
  return docs;
}

std::vector<std::string> extract_terms(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    std::size_t j = i;
    while (j < n && is_space(text[j])) ++j;
    if (j < n && is_word_char(text[j])) {
      std::size_t k = j;
      while (k < n && is_word_char(text[k])) ++k;
      out.emplace_back(text.substr(i, k - i));
      i = k;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> WeightMatrix::row_terms(std::size_t doc) const {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(rows.at(doc).size());
  for (const auto& [t, w] : rows[doc]) out.emplace_back(vocabulary[t], w);
  return out;
}

WeightMatrix vectorize(const std::vector<std::string>& docs, Method method, double min_df, double max_df) {
  if (docs.empty()) throw EmptyDocumentSet("vectorize needs at least one keyword document");
  WeightMatrix m;
  m.method = method;
  m.n_docs = docs.size();
  std::vector<std::map<std::string, std::int64_t>> counts(docs.size());
  std::map<std::string, std::int64_t> df;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (auto& t : extract_terms(docs[d])) ++counts[d][std::move(t)];
    for (const auto& [t, c] : counts[d]) ++df[t];
  }
  const double n = static_cast<double>(docs.size());
  // df is an integer, so a small slack keeps products such as 0.29 * 100
  // (28.999...) from cutting a term whose df equals the exact bound.
  const double max_count = max_df * n + 1e-9;
  const double min_count = min_df * n - 1e-9;
  std::map<std::string, std::size_t> index;
  for (const auto& [t, f] : df) {
    const auto fd = static_cast<double>(f);
    if (fd > max_count || fd < min_count) continue;
    index.emplace(t, m.vocabulary.size());
    m.vocabulary.push_back(t);
    m.df.push_back(f);
    m.idf.push_back(method == Method::TF ? 1.0 : std::log((1.0 + n) / (1.0 + fd)) + 1.0);
  }
  m.rows.resize(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& [t, c] : counts[d]) {
      auto it = index.find(t);
      if (it == index.end()) continue;
      m.rows[d].emplace_back(it->second, static_cast<double>(c) * m.idf[it->second]);
    }
  }
  return m;
}

std::vector<Term> structural_filter(const std::vector<std::pair<std::string, double>>& scored,
                                    const WordSet& stopwords) {
  std::vector<Term> out;
  for (const auto& [surface, score] : scored) {
    if (!(score > 0.0)) continue;
    std::size_t lead = 0;
    while (lead < surface.size() && is_space(surface[lead])) ++lead;
    const std::string core = surface.substr(lead);
    if (core.size() < 3 || stopwords.contains(to_lower(core))) continue;
    if (!std::all_of(core.begin(), core.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); })) {
      continue;
    }
    if (lead != 1 || surface[0] != ' ') continue;
    out.push_back({surface, score, 0.0});
  }
  return out;
}

std::vector<Term> mean_threshold(const std::vector<Term>& terms) {
  if (terms.empty()) return {};
  double sum = 0.0;
  for (const auto& t : terms) sum += t.score;
  const double mean = sum / static_cast<double>(terms.size());
  const double floor = mean - 1e-12 * std::abs(mean);
  std::vector<Term> out;
  for (const auto& t : terms) {
    if (t.score >= floor) out.push_back(t);
  }
  return out;
}

void sort_terms(std::vector<Term>& terms) {
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.surface < b.surface;
  });
}

WordList build_wordlist(const std::vector<std::pair<std::string, double>>& row, const std::string& keyword,
                        Method method, retrieval::Embedder& embedder, const WordSet& stopwords,
                        double sim_threshold) {
  WordList list{keyword, method, {}};
  auto kept = mean_threshold(structural_filter(row, stopwords));
  if (!kept.empty()) {
    std::vector<std::string> texts{keyword};
    for (const auto& t : kept) texts.push_back(t.core());
    const auto vecs = embedder.embed_batch(texts);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      kept[i].cosine = retrieval::dot(vecs[0].values, vecs[i + 1].values);
      if (kept[i].cosine >= sim_threshold) list.terms.push_back(kept[i]);
    }
  }
  if (list.terms.empty()) throw EmptyWordList("no terms survive for keyword '" + keyword + "'");
  sort_terms(list.terms);
  return list;
}

BuildResult build_wordlists(const std::vector<KeywordDocument>& docs, Method method, double min_df, double max_df,
                            retrieval::Embedder& embedder, const WordSet& stopwords, double sim_threshold) {
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  const auto matrix = vectorize(texts, method, min_df, max_df);
  BuildResult result;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    try {
      result.lists.push_back(
          build_wordlist(matrix.row_terms(d), docs[d].keyword, method, embedder, stopwords, sim_threshold));
    } catch (const EmptyWordList& e) {
      result.warnings.push_back(std::string("EmptyWordList: ") + e.what());
    }
  }
  return result;
}

std::string wordlists_to_jsonl(const std::vector<WordList>& lists) {
  std::vector<const WordList*> order;
  for (const auto& l : lists) order.push_back(&l);
  std::sort(order.begin(), order.end(), [](const WordList* a, const WordList* b) { return a->keyword < b->keyword; });
  std::string out;
  for (const auto* l : order) {
    auto terms = l->terms;
    sort_terms(terms);
    for (const auto& t : terms) {
      out += json{{"keyword", l->keyword}, {"term", t.surface}, {"score", t.score}, {"cosine", t.cosine}}.dump();
      out += '\n';
    }
  }
  return out;
}

std::vector<WordList> load_wordlists(const std::filesystem::path& path, Method method) {
  std::map<std::string, WordList> by_keyword;
  for (const auto& j : read_jsonl(path)) {
    const auto keyword = j.at("keyword").get<std::string>();
    auto& list = by_keyword[keyword];
    list.keyword = keyword;
    list.method = method;
    list.terms.push_back({j.at("term").get<std::string>(), j.at("score").get<double>(), j.value("cosine", 0.0)});
  }
  std::vector<WordList> out;
  for (auto& [k, l] : by_keyword) {
    sort_terms(l.terms);
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace domainbench::wordlist
