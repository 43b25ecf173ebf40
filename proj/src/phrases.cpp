#include "domainbench/phrases.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "domainbench/errors.hpp"

namespace domainbench::phrases {

namespace {

bool is_alnum_lower(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'); }

std::string strip_brackets(std::string_view s) {
  std::string out;
  int depth = 0;
  for (char c : s) {
    if (c == '(' || c == '[' || c == '{') {
      ++depth;
      continue;
    }
    if (c == ')' || c == ']' || c == '}') {
      if (depth > 0) --depth;
      out.push_back(' ');
      continue;
    }
    if (depth == 0) out.push_back(c);
  }
  return out;
}

std::string expand_contractions(std::string_view s) {
  static const std::vector<std::pair<std::string_view, std::string_view>> kRules = {
      {"won't", "will not"}, {"can't", "can not"}, {"n't", " not"}, {"'re", " are"},
      {"'ve", " have"},      {"'ll", " will"},     {"'m", " am"},   {"'d", " would"},
      {"'s", ""}};
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    bool replaced = false;
    for (const auto& [from, to] : kRules) {
      if (s.substr(i, from.size()) != from) continue;
      const std::size_t after = i + from.size();
      const bool at_word_end = after >= s.size() || !is_alnum_lower(s[after]);
      const bool after_word = i > 0 && is_alnum_lower(s[i - 1]);
      if (!at_word_end || (from.front() == '\'' && !after_word)) continue;
      out.append(to);
      i = after;
      replaced = true;
      break;
    }
    if (!replaced) out.push_back(s[i++]);
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize_for_mining(std::string_view sentence) {
  const std::string text = expand_contractions(strip_brackets(to_lower(sentence)));
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (is_alnum_lower(c)) {
      std::size_t j = i;
      while (j < n) {
        if (is_alnum_lower(text[j])) {
          ++j;
        } else if (text[j] == '-' && j + 1 < n && is_alnum_lower(text[j + 1])) {
          ++j;
        } else {
          break;
        }
      }
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    // Apostrophes left over after contraction handling are dropped.
    if (c != '\'') tokens.emplace_back(1, c);
    ++i;
  }
  return tokens;
}

double collocation_score(std::int64_t count_ab, std::int64_t count_a, std::int64_t count_b,
                         std::int64_t vocab_size, std::int64_t min_count) {
  return static_cast<double>(count_ab - min_count) * static_cast<double>(vocab_size) /
         (static_cast<double>(count_a) * static_cast<double>(count_b));
}

bool is_word_token(std::string_view token) {
  return !token.empty() && std::isalnum(static_cast<unsigned char>(token.front()));
}

std::vector<NGramCandidate> mine_phrases(const std::vector<std::vector<std::string>>& sentences,
                                         const MiningOptions& options) {
  struct Unit {
    std::string surface;
    int n;
    bool word;
  };
  std::vector<Unit> units;
  std::unordered_map<std::string, int> ids;
  auto intern = [&](const std::string& surface, int n, bool word) {
    auto [it, inserted] = ids.emplace(surface, static_cast<int>(units.size()));
    if (inserted) units.push_back({surface, n, word});
    return it->second;
  };

  std::vector<std::vector<int>> stream;
  stream.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<int> row;
    row.reserve(s.size());
    for (const auto& tok : s) row.push_back(intern(tok, 1, is_word_token(tok)));
    stream.push_back(std::move(row));
  }

  std::map<std::string, NGramCandidate> found;
  for (int pass = 0; pass < std::max(0, options.max_n - 1); ++pass) {
    std::vector<std::int64_t> unit_count(units.size(), 0);
    std::map<std::pair<int, int>, std::int64_t> pair_count;
    for (const auto& row : stream) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        ++unit_count[row[i]];
        if (i + 1 < row.size() && units[row[i]].word && units[row[i + 1]].word) {
          ++pair_count[{row[i], row[i + 1]}];
        }
      }
    }
    if (pass == 0 && pair_count.empty()) throw EmptyCorpus("token stream has no bigram occurrences");
    const auto vocab = static_cast<std::int64_t>(
        std::count_if(unit_count.begin(), unit_count.end(), [](std::int64_t c) { return c > 0; }));

    std::map<std::pair<int, int>, int> merges;  // pair -> merged unit id
    for (const auto& [pair, count] : pair_count) {
      const auto& a = units[pair.first];
      const auto& b = units[pair.second];
      const int n = a.n + b.n;
      if (n > options.max_n) continue;
      const double score =
          collocation_score(count, unit_count[pair.first], unit_count[pair.second], vocab, options.min_count);
      if (!(score > options.threshold)) continue;
      std::string surface = a.surface + " " + b.surface;
      auto it = found.find(surface);
      if (it == found.end() || count > it->second.count ||
          (count == it->second.count && score > it->second.score)) {
        found[surface] = {surface, n, count, score};
      }
      merges[pair] = -1;
    }
    if (merges.empty()) break;
    for (auto& [pair, id] : merges) {
      id = intern(units[pair.first].surface + " " + units[pair.second].surface,
                  units[pair.first].n + units[pair.second].n, true);
    }
    for (auto& row : stream) {
      std::vector<int> next;
      next.reserve(row.size());
      for (std::size_t i = 0; i < row.size();) {
        if (i + 1 < row.size()) {
          auto it = merges.find({row[i], row[i + 1]});
          if (it != merges.end()) {
            next.push_back(it->second);
            i += 2;
            continue;
          }
        }
        next.push_back(row[i]);
        ++i;
      }
      row = std::move(next);
    }
  }

  std::vector<NGramCandidate> out;
  out.reserve(found.size());
  for (auto& [surface, cand] : found) out.push_back(std::move(cand));
  std::stable_sort(out.begin(), out.end(),
                   [](const NGramCandidate& a, const NGramCandidate& b) { return a.n < b.n; });
  return out;
}

// ---- filtering -----------------------------------------------------------

DictionaryLemmatizer::DictionaryLemmatizer(std::map<std::string, std::string, std::less<>> exceptions)
    : exceptions_(std::move(exceptions)) {}

std::string DictionaryLemmatizer::lemma(std::string_view word) const {
  std::string w = to_lower(word);
  if (auto it = exceptions_.find(w); it != exceptions_.end()) return it->second;
  if (w.size() <= 3) return w;
  if (ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  if (ends_with(w, "xes") || ends_with(w, "ches") || ends_with(w, "shes") || ends_with(w, "zes")) {
    return w.substr(0, w.size() - 2);
  }
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is") || ends_with(w, "ous")) return w;
  if (ends_with(w, "s")) return w.substr(0, w.size() - 1);
  return w;
}

bool is_valid_keyword_word(std::string_view word) {
  if (word.empty() || word.front() == '-' || word.back() == '-') return false;
  char prev = '-';
  for (char c : word) {
    if (c == '-') {
      if (prev == '-') return false;
    } else if (c < 'a' || c > 'z') {
      return false;
    }
    prev = c;
  }
  return true;
}

std::vector<NGramCandidate> filter_candidates(const std::vector<NGramCandidate>& candidates,
                                              const FilterLists& filters, const Lemmatizer& lemmatizer) {
  std::vector<NGramCandidate> out;
  for (const auto& c : candidates) {
    bool keep = true;
    for (const auto& word : split_whitespace(c.surface)) {
      // Lists hold lemma forms, but inflected stopwords ("was", "does") are
      // listed verbatim too, so both forms are checked.
      if (!is_valid_keyword_word(word) || filters.contains(word) || filters.contains(lemmatizer.lemma(word))) {
        keep = false;
        break;
      }
    }
    if (keep) out.push_back(c);
  }
  return out;
}

// ---- selection -----------------------------------------------------------

std::size_t bucket_of(int n) { return n <= 2 ? 0 : n >= 5 ? 3 : static_cast<std::size_t>(n - 2); }

std::vector<int> largest_remainder(const std::vector<double>& weights, int total) {
  std::vector<int> out(weights.size(), 0);
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || total <= 0 || !(sum > 0.0)) return out;
  std::vector<double> rem(weights.size());
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    // Guard against 0.3 * 300 landing a hair below 90.
    const double fl = std::floor(exact + 1e-9);
    out[i] = static_cast<int>(fl);
    rem[i] = std::max(0.0, exact - fl);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(rem[a] - rem[b]) > 1e-9) return rem[a] > rem[b];
    return a < b;
  });
  for (std::size_t k = 0; assigned < total && k < order.size(); ++k, ++assigned) ++out[order[k]];
  return out;
}

namespace {

bool rank_before(const NGramCandidate& a, const NGramCandidate& b) {
  if (a.count != b.count) return a.count > b.count;
  if (a.score != b.score) return a.score > b.score;
  return a.surface < b.surface;
}

}  // namespace

void rerank(std::vector<Keyword>& keywords) {
  std::map<int, int> next;
  for (auto& k : keywords) k.rank_within_n = ++next[k.n];
  std::stable_sort(keywords.begin(), keywords.end(), [](const Keyword& a, const Keyword& b) {
    if (a.n != b.n) return a.n < b.n;
    return a.rank_within_n < b.rank_within_n;
  });
}

Selection select_keywords(const std::vector<NGramCandidate>& candidates, const SelectionOptions& options) {
  const double psum = std::accumulate(options.proportions.begin(), options.proportions.end(), 0.0);
  if (std::abs(psum - 1.0) > 1e-9) throw ConfigInvalid("keyword proportions must sum to 1");
  Selection sel;
  std::array<std::vector<NGramCandidate>, kBuckets> buckets;
  for (const auto& c : candidates) {
    if (c.n >= 2) buckets[bucket_of(c.n)].push_back(c);
  }
  for (auto& b : buckets) std::sort(b.begin(), b.end(), rank_before);

  const int target = std::max(0, options.target_count);
  std::size_t total = 0;
  for (const auto& b : buckets) total += b.size();
  if (total < static_cast<std::size_t>(target)) {
    sel.insufficient = true;
    sel.warnings.push_back("InsufficientCandidates: " + std::to_string(total) + " candidates for target " +
                           std::to_string(target));
  }

  auto quotas = largest_remainder({options.proportions.begin(), options.proportions.end()}, target);
  for (std::size_t i = 0; i < kBuckets; ++i) sel.initial_quotas[i] = quotas[i];

  std::array<bool, kBuckets> saturated{};
  while (true) {
    int shortfall = 0;
    for (std::size_t i = 0; i < kBuckets; ++i) {
      const int avail = static_cast<int>(buckets[i].size());
      if (quotas[i] >= avail) {
        shortfall += quotas[i] - avail;
        quotas[i] = avail;
        saturated[i] = true;
      }
    }
    if (shortfall == 0) break;
    std::vector<double> shares(kBuckets, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < kBuckets; ++i) {
      if (!saturated[i]) {
        shares[i] = static_cast<double>(buckets[i].size());
        any = true;
      }
    }
    if (!any) break;
    auto extra = largest_remainder(shares, shortfall);
    for (std::size_t i = 0; i < kBuckets; ++i) quotas[i] += extra[i];
  }

  for (std::size_t i = 0; i < kBuckets; ++i) {
    sel.final_quotas[i] = quotas[i];
    for (int r = 0; r < quotas[i]; ++r) {
      const auto& c = buckets[i][static_cast<std::size_t>(r)];
      sel.keywords.push_back({c.surface, c.n, 0, c.count, c.score});
    }
  }
  rerank(sel.keywords);
  return sel;
}

// ---- dedup ---------------------------------------------------------------

std::vector<Keyword> dedup_keywords(const std::vector<Keyword>& keywords,
                                    const std::vector<retrieval::EmbeddingVector>& vectors,
                                    double sim_threshold) {
  const std::size_t n = keywords.size();
  if (vectors.size() != n) throw DimensionMismatch("dedup_keywords: one vector per keyword required");
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sim[i][j] = sim[j][i] = retrieval::dot(vectors[i].values, vectors[j].values);
    }
  }
  // Single-link clusters over the above-threshold graph.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sim[i][j] > sim_threshold) parent[find(i)] = find(j);
    }
  }
  std::vector<double> cluster_mean(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    int m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && find(j) == find(i)) {
        s += sim[i][j];
        ++m;
      }
    }
    cluster_mean[i] = m ? s / m : 0.0;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return keywords[a].surface < keywords[b].surface; });
  std::vector<bool> alive(n, true);
  for (std::size_t oi = 0; oi < n; ++oi) {
    for (std::size_t oj = oi + 1; oj < n; ++oj) {
      const std::size_t a = order[oi];
      const std::size_t b = order[oj];
      if (!alive[a] || !alive[b] || !(sim[a][b] > sim_threshold)) continue;
      const auto la = keywords[a].surface.size();
      const auto lb = keywords[b].surface.size();
      bool keep_a;
      if (la != lb) {
        keep_a = la < lb;
      } else if (cluster_mean[a] != cluster_mean[b]) {
        keep_a = cluster_mean[a] > cluster_mean[b];
      } else {
        keep_a = true;  // a precedes b lexicographically
      }
      alive[keep_a ? b : a] = false;
    }
  }
  std::vector<Keyword> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) out.push_back(keywords[i]);
  }
  rerank(out);
  return out;
}

std::vector<Keyword> dedup_keywords(const std::vector<Keyword>& keywords, retrieval::Embedder& embedder,
                                    double sim_threshold) {
  std::vector<std::string> texts;
  texts.reserve(keywords.size());
  for (const auto& k : keywords) texts.push_back(k.surface);
  return dedup_keywords(keywords, embedder.embed_batch(texts), sim_threshold);
}

std::string keywords_to_jsonl(const std::vector<Keyword>& keywords) {
  std::string out;
  for (const auto& k : keywords) {
    out += json{{"surface", k.surface}, {"n", k.n}, {"count", k.count}, {"score", k.score}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<Keyword> load_keywords(const std::filesystem::path& path) {
  std::vector<Keyword> out;
  for (const auto& j : read_jsonl(path)) {
    out.push_back({j.at("surface").get<std::string>(), j.at("n").get<int>(), 0, j.at("count").get<std::int64_t>(),
                   j.at("score").get<double>()});
  }
  std::map<int, int> next;
  for (auto& k : out) k.rank_within_n = ++next[k.n];
  return out;
}

}  // namespace domainbench::phrases
