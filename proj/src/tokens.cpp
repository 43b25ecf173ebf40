#include "domainbench/tokens.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "domainbench/errors.hpp"

namespace domainbench::tokens {

namespace {

enum class CharClass { Letter, Digit, Space, Other };

CharClass classify(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (std::isalpha(u)) return CharClass::Letter;
  if (std::isdigit(u)) return CharClass::Digit;
  if (is_space(c)) return CharClass::Space;
  return CharClass::Other;
}

std::size_t run_end(std::string_view s, std::size_t i, CharClass cls) {
  while (i < s.size() && classify(s[i]) == cls) ++i;
  return i;
}

}  // namespace

std::vector<std::string> pretokenize(std::string_view s) {
  static const std::vector<std::string_view> kContractions = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    if (s[i] == '\'') {
      bool matched = false;
      for (auto c : kContractions) {
        if (s.substr(i, c.size()) == c) {
          out.emplace_back(c);
          i += c.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    const CharClass cls = classify(s[i]);
    if (cls != CharClass::Space) {
      const std::size_t j = run_end(s, i, cls);
      out.emplace_back(s.substr(i, j - i));
      i = j;
      continue;
    }
    if (s[i] == ' ' && i + 1 < n && classify(s[i + 1]) != CharClass::Space) {
      const CharClass next = classify(s[i + 1]);
      const std::size_t j = run_end(s, i + 1, next);
      out.emplace_back(s.substr(i, j - i));
      i = j;
      continue;
    }
    std::size_t j = run_end(s, i, CharClass::Space);
    if (j < n && j - i > 1) --j;  // leave one whitespace char for the next word
    out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// ---- PieceTokenizer ------------------------------------------------------

PieceTokenizer::PieceTokenizer(std::vector<std::string> pieces) {
  std::set<std::string> unique;
  for (auto& p : pieces) {
    if (p.size() > 1) unique.insert(std::move(p));
  }
  pieces_.assign(unique.begin(), unique.end());
  for (std::size_t i = 0; i < pieces_.size(); ++i) index_.emplace(pieces_[i], static_cast<TokenId>(256 + i));
  id_ = "piece-v1:" + sha256_hex(join(pieces_, "\n")).substr(0, 16);
}

std::vector<std::string> PieceTokenizer::split_pretoken(std::string_view pretoken) {
  if (pretoken.size() <= kWholeLimit) return {std::string(pretoken)};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < pretoken.size(); i += kChunk) out.emplace_back(pretoken.substr(i, kChunk));
  return out;
}

PieceTokenizer PieceTokenizer::train(const std::vector<std::string>& texts) {
  std::vector<std::string> pieces;
  for (const auto& t : texts) {
    for (const auto& pre : pretokenize(t)) {
      for (auto& p : split_pretoken(pre)) pieces.push_back(std::move(p));
    }
  }
  return PieceTokenizer(std::move(pieces));
}

PieceTokenizer PieceTokenizer::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw SchemaError("tokenizer file " + path.string() + ": " + e.what());
  }
  PieceTokenizer tok(j.at("pieces").get<std::vector<std::string>>());
  if (j.value("id", tok.id()) != tok.id()) throw TokenizerMismatch("tokenizer file id does not match its pieces");
  return tok;
}

void PieceTokenizer::save(const std::filesystem::path& path) const {
  write_file(path, json{{"id", id_}, {"pieces", pieces_}}.dump() + "\n");
}

std::vector<TokenId> PieceTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& pre : pretokenize(text)) {
    for (const auto& piece : split_pretoken(pre)) {
      if (auto it = index_.find(piece); it != index_.end()) {
        ids.push_back(it->second);
      } else {
        for (unsigned char c : piece) ids.push_back(static_cast<TokenId>(c));
      }
    }
  }
  return ids;
}

std::string PieceTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (auto id : ids) out += token_string(id);
  return out;
}

std::string PieceTokenizer::token_string(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
    throw TokenizerMismatch("token id " + std::to_string(id) + " outside vocabulary of " + id_);
  }
  if (id < 256) return std::string(1, static_cast<char>(id));
  return pieces_[static_cast<std::size_t>(id - 256)];
}

// ---- HttpTokenizer -------------------------------------------------------

HttpTokenizer::HttpTokenizer(std::string base_url, http::RetryOptions options)
    : base_url_(std::move(base_url)), options_(options) {
  try {
    const auto info = http::request(base_url_, "/info", json(), options_);
    id_ = info.at("tokenizer_id").get<std::string>();
    vocab_size_ = info.at("vocab_size").get<std::size_t>();
  } catch (const http::ServiceError& e) {
    throw ScorerUnavailable(std::string("tokenizer: ") + e.what());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("/info reply: ") + e.what());
  }
}

std::vector<TokenId> HttpTokenizer::encode(std::string_view text) const {
  try {
    return http::request(base_url_, "/tokenize", json{{"text", text}}, options_).at("ids").get<std::vector<TokenId>>();
  } catch (const http::ServiceError& e) {
    throw ScorerUnavailable(std::string("tokenizer: ") + e.what());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("/tokenize reply: ") + e.what());
  }
}

std::string HttpTokenizer::decode(std::span<const TokenId> ids) const {
  try {
    const std::vector<TokenId> v(ids.begin(), ids.end());
    return http::request(base_url_, "/tokenize", json{{"ids", v}}, options_).at("text").get<std::string>();
  } catch (const http::ServiceError& e) {
    throw ScorerUnavailable(std::string("tokenizer: ") + e.what());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("/tokenize reply: ") + e.what());
  }
}

std::string HttpTokenizer::token_string(TokenId id) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = strings_.find(id); it != strings_.end()) return it->second;
  }
  const TokenId one[1] = {id};
  std::string s = decode(one);
  std::lock_guard lock(mutex_);
  return strings_.emplace(id, std::move(s)).first->second;
}

// ---- profiling -----------------------------------------------------------

WordSet TokenList::pool(std::size_t pool_size) const {
  WordSet out;
  for (std::size_t i = 0; i < tokens.size() && i < pool_size; ++i) out.insert(trim(tokens[i].token));
  return out;
}

bool is_filtered_token(std::string_view token, const WordSet& stopwords) {
  const std::string core = to_lower(trim_view(token));
  return core.size() <= 2 || stopwords.contains(core);
}

TokenList profile_tokens(const std::string& keyword, const std::vector<std::string>& sentences,
                         const Tokenizer& tokenizer, const WordSet& stopwords, std::size_t capacity) {
  if (sentences.empty()) throw NoSentences("keyword '" + keyword + "' has no matched sentences");
  std::map<TokenId, std::int64_t> counts;
  for (auto id : tokenizer.encode(join(sentences, " "))) ++counts[id];
  TokenList list{keyword, tokenizer.id(), capacity, {}};
  for (const auto& [id, c] : counts) {
    std::string s = tokenizer.token_string(id);
    if (!is_filtered_token(s, stopwords)) list.tokens.push_back({std::move(s), id, c});
  }
  std::sort(list.tokens.begin(), list.tokens.end(), [](const TokenCount& a, const TokenCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.id < b.id;
  });
  if (list.tokens.size() > capacity) list.tokens.resize(capacity);
  return list;
}

std::string token_lists_to_jsonl(const std::vector<TokenList>& lists) {
  std::vector<const TokenList*> order;
  for (const auto& l : lists) order.push_back(&l);
  std::sort(order.begin(), order.end(), [](const TokenList* a, const TokenList* b) { return a->keyword < b->keyword; });
  std::string out;
  for (const auto* l : order) {
    json toks = json::array();
    for (const auto& t : l->tokens) toks.push_back(json::array({t.token, t.id, t.count}));
    out += json{{"keyword", l->keyword}, {"tokenizer_id", l->tokenizer_id}, {"capacity", l->capacity}, {"tokens", toks}}
               .dump();
    out += '\n';
  }
  return out;
}

std::vector<TokenList> load_token_lists(const std::filesystem::path& path) {
  std::vector<TokenList> out;
  for (const auto& j : read_jsonl(path)) {
    TokenList l;
    try {
      l.keyword = j.at("keyword").get<std::string>();
      l.tokenizer_id = j.at("tokenizer_id").get<std::string>();
      l.capacity = j.value("capacity", std::size_t{5000});
      for (const auto& t : j.at("tokens")) {
        l.tokens.push_back({t.at(0).get<std::string>(), t.at(1).get<TokenId>(), t.at(2).get<std::int64_t>()});
      }
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
    out.push_back(std::move(l));
  }
  return out;
}

void require_tokenizer(const std::vector<TokenList>& lists, const std::string& expected) {
  for (const auto& l : lists) {
    if (l.tokenizer_id != expected) {
      throw TokenizerMismatch("token list for '" + l.keyword + "' built with " + l.tokenizer_id + ", analysis uses " +
                              expected);
    }
  }
}

}  // namespace domainbench::tokens
