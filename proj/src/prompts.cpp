#include "domainbench/prompts.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "domainbench/errors.hpp"

namespace domainbench::prompts {

namespace {

bool continues_word(const std::string& token) {
  return !token.empty() && (std::isalnum(static_cast<unsigned char>(token.front())) || token.front() == '_');
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<MatchSpan> scan_matches(const std::vector<std::string>& token_strings, const wordlist::WordList& list,
                                    std::size_t scan_start) {
  std::set<std::string, std::less<>> terms;
  std::size_t longest = 0;
  for (const auto& t : list.terms) {
    terms.insert(t.surface);
    longest = std::max(longest, t.surface.size());
  }
  std::vector<MatchSpan> out;
  const std::size_t n = token_strings.size();
  for (std::size_t p = scan_start; p < n; ++p) {
    std::string text;
    std::size_t best = 0;
    for (std::size_t q = p; q < n; ++q) {
      text += token_strings[q];
      if (text.size() > longest) break;
      auto it = terms.lower_bound(text);
      if (it == terms.end() || !starts_with(*it, text)) break;
      if (*it == text && (q + 1 == n || !continues_word(token_strings[q + 1]))) best = q + 1;
    }
    if (best > 0) {
      std::string term;
      for (std::size_t i = p; i < best; ++i) term += token_strings[i];
      out.push_back({p, best, std::move(term)});
    }
  }
  return out;
}

std::vector<MatchSpan> find_matches(const std::vector<TokenId>& sentence_tokens, const wordlist::WordList& list,
                                    const tokens::Tokenizer& tokenizer, const MatchOptions& options) {
  std::vector<std::string> strings;
  strings.reserve(sentence_tokens.size());
  for (auto id : sentence_tokens) strings.push_back(tokenizer.token_string(id));
  const auto recorded = scan_matches(strings, list, options.scan_start);
  std::set<std::size_t> ends;
  for (const auto& m : recorded) ends.insert(m.end);
  std::vector<MatchSpan> out;
  for (const auto& m : recorded) {
    if (m.start >= options.min_context && !ends.contains(m.start)) out.push_back(m);
  }
  return out;
}

std::string seed_path(std::uint64_t seed, wordlist::Method method, const std::string& keyword,
                      const std::string& doc_id, int sent_index) {
  return std::to_string(seed) + "/" + wordlist::method_name(method) + "/" + keyword + "/" + doc_id + "/" +
         std::to_string(sent_index);
}

std::size_t keyed_choice(const std::string& path, std::size_t n) {
  if (n == 0) throw std::invalid_argument("keyed_choice over an empty range");
  std::uint64_t state = sha256_u64(path);
  const std::uint64_t x = splitmix64(state);
  return static_cast<std::size_t>((static_cast<unsigned __int128>(x) * n) >> 64);
}

std::vector<PromptTarget> build_pairs(const std::string& keyword, const std::vector<retrieval::SentenceMatch>& matches,
                                      const std::vector<corpus::CleanSentence>& sentences,
                                      const wordlist::WordList& list, const tokens::Tokenizer& tokenizer,
                                      std::uint64_t seed, const PairOptions& options, PairStats* stats) {
  PairStats local;
  std::map<std::pair<std::string_view, int>, const std::string*> by_key;
  for (const auto& s : sentences) by_key[{s.doc_id, s.sent_index}] = &s.text;
  const MatchOptions mopt{options.scan_start, options.min_context_tokens};

  std::vector<PromptTarget> pairs;
  std::set<std::pair<std::string, int>> consumed;
  for (const auto& m : matches) {
    if (pairs.size() >= options.n_pairs) break;
    auto it = by_key.find({m.doc_id, m.sent_index});
    if (it == by_key.end() || !consumed.emplace(m.doc_id, m.sent_index).second) continue;
    ++local.sentences_scanned;
    const auto ids = tokenizer.encode(*it->second);
    const auto spans = find_matches(ids, list, tokenizer, mopt);
    if (spans.empty()) {
      ++local.sentences_without_match;
      continue;
    }
    std::vector<std::pair<const MatchSpan*, std::string>> valid;
    for (const auto& span : spans) {
      const std::span<const TokenId> prefix(ids.data(), span.start);
      std::string prompt = tokenizer.decode(prefix);
      if (prompt.size() < options.min_context_chars) {
        ++local.rejected_char_floor;
        continue;
      }
      const auto again = tokenizer.encode(prompt);
      if (!std::equal(again.begin(), again.end(), prefix.begin(), prefix.end())) {
        ++local.rejected_round_trip;
        continue;
      }
      valid.emplace_back(&span, std::move(prompt));
    }
    if (valid.empty()) continue;
    const std::string path = seed_path(seed, list.method, keyword, m.doc_id, m.sent_index);
    auto& [span, prompt] = valid[valid.size() == 1 ? 0 : keyed_choice(path, valid.size())];
    pairs.push_back({keyword, list.method, std::move(prompt), span->term, m.doc_id, m.sent_index,
                     static_cast<std::int64_t>(span->start), path});
  }
  local.underfull = pairs.size() < options.n_pairs;
  if (stats) *stats = local;
  sort_pairs(pairs);
  return pairs;
}

void sort_pairs(std::vector<PromptTarget>& pairs) {
  std::stable_sort(pairs.begin(), pairs.end(), [](const PromptTarget& a, const PromptTarget& b) {
    return std::tie(a.keyword, a.doc_id, a.sent_index) < std::tie(b.keyword, b.doc_id, b.sent_index);
  });
}

std::string pairs_to_jsonl(std::vector<PromptTarget> pairs) {
  sort_pairs(pairs);
  std::string out;
  for (const auto& p : pairs) {
    out += json{{"keyword", p.keyword},
                {"method", wordlist::method_name(p.method)},
                {"prompt", p.prompt},
                {"target", p.target},
                {"doc_id", p.doc_id},
                {"sent_index", p.sent_index},
                {"match_start", p.match_start},
                {"seed_path", p.seed_path}}
               .dump();
    out += '\n';
  }
  return out;
}

namespace {

PromptTarget pair_from_json(const json& j, wordlist::Method fallback) {
  PromptTarget p;
  p.keyword = j.at("keyword").get<std::string>();
  p.prompt = j.at("prompt").get<std::string>();
  p.target = j.at("target").get<std::string>();
  p.method = j.contains("method") ? wordlist::parse_method(j.at("method").get<std::string>()) : fallback;
  p.doc_id = j.value("doc_id", std::string("external"));
  p.sent_index = j.value("sent_index", 0);
  p.match_start = j.value("match_start", std::int64_t{-1});
  p.seed_path = j.value("seed_path", std::string());
  if (p.prompt.empty() || p.target.empty()) throw SchemaError("pair with empty prompt or target");
  return p;
}

}  // namespace

std::vector<PromptTarget> load_pairs(const std::filesystem::path& path) {
  std::vector<PromptTarget> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back(pair_from_json(j, wordlist::Method::TF));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<PromptTarget> import_external_pairs(const std::filesystem::path& path, wordlist::Method method) {
  std::vector<PromptTarget> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      auto p = pair_from_json(j, method);
      p.method = method;
      p.doc_id = "external";
      p.match_start = -1;
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
  }
  // File order is the only provenance an external benchmark carries.
  for (std::size_t i = 0; i < out.size(); ++i) out[i].sent_index = static_cast<int>(i);
  return out;
}

}  // namespace domainbench::prompts
