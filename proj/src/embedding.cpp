#include "domainbench/embedding.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "domainbench/errors.hpp"

namespace domainbench::retrieval {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot product of vectors with different sizes");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

EmbeddingVector canonicalize(std::span<const double> raw) {
  double sq = 0.0;
  for (double v : raw) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw EmbeddingUnavailable("provider returned a zero or non-finite vector");
  EmbeddingVector out;
  out.values.reserve(raw.size());
  double check = 0.0;
  for (double v : raw) {
    const double r = static_cast<double>(static_cast<float>(v / norm));
    out.values.push_back(r);
    check += r * r;
  }
  out.norm = std::sqrt(check);
  return out;
}

// ---- HTTP provider -------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url)
    : HttpEmbeddingProvider(std::move(base_url), Options{}) {}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, Options options)
    : base_url_(std::move(base_url)), options_(options) {}

std::vector<std::vector<double>> HttpEmbeddingProvider::request(const std::vector<std::string>& texts) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(options_.timeout_s, 0);
  client.set_read_timeout(options_.timeout_s, 0);
  const std::string body = json{{"texts", texts}}.dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_ms << (attempt - 1)));
    }
    auto res = client.Post("/embed", body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      std::string msg = "HTTP " + std::to_string(res->status);
      try {
        msg += ": " + json::parse(res->body).value("error", "");
      } catch (const json::exception&) {
      }
      // Client errors will not improve with retries.
      if (res->status >= 400 && res->status < 500) throw EmbeddingUnavailable(msg);
      last_error = msg;
      continue;
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw EmbeddingUnavailable(std::string("malformed /embed reply: ") + e.what());
    }
    const auto dim = reply.at("dim").get<std::size_t>();
    auto vectors = reply.at("vectors").get<std::vector<std::vector<double>>>();
    if (vectors.size() != texts.size()) {
      throw EmbeddingUnavailable("/embed returned " + std::to_string(vectors.size()) +
                                 " vectors for " + std::to_string(texts.size()) + " texts");
    }
    for (const auto& v : vectors) {
      if (v.size() != dim) throw DimensionMismatch("/embed vector length differs from declared dim");
    }
    return vectors;
  }
  throw EmbeddingUnavailable("embedding service at " + base_url_ + " unreachable: " + last_error);
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_raw(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t b = 0; b < texts.size(); b += options_.batch_size) {
    const auto e = std::min(texts.size(), b + options_.batch_size);
    std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(b),
                                   texts.begin() + static_cast<std::ptrdiff_t>(e));
    for (auto& v : request(batch)) out.push_back(std::move(v));
  }
  return out;
}

// ---- local providers -----------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double unit_interval(std::uint64_t& state) {
  // 53 random bits in (0, 1].
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

void add_scaled(std::vector<double>& acc, const std::vector<double>& v, double w) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * v[i];
}

void normalize_in_place(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq <= 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

}  // namespace

std::vector<double> random_unit_vector(std::string_view key, std::size_t dim) {
  std::uint64_t state = sha256_u64(key);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; i += 2) {
    const double u1 = unit_interval(state);
    const double u2 = unit_interval(state);
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  normalize_in_place(v);
  return v;
}

std::vector<std::string> CooccurrenceEmbeddingProvider::content_words(std::string_view text,
                                                                      const WordSet& stopwords) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '-') cur.pop_back();
    while (!cur.empty() && cur.front() == '-') cur.erase(cur.begin());
    if (!cur.empty() && !stopwords.contains(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-') {
      cur.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dim, WordSet stopwords)
    : dim_(dim), stopwords_(std::move(stopwords)) {}

std::string HashingEmbeddingProvider::id() const { return "hashing-v1:" + std::to_string(dim_); }

std::vector<std::vector<double>> HashingEmbeddingProvider::embed_raw(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<double> acc(dim_, 0.0);
    auto words = CooccurrenceEmbeddingProvider::content_words(t, stopwords_);
    for (const auto& w : words) add_scaled(acc, random_unit_vector(w, dim_), 1.0);
    if (words.empty()) acc = random_unit_vector("\x01text:" + t, dim_);
    out.push_back(std::move(acc));
  }
  return out;
}

CooccurrenceEmbeddingProvider::CooccurrenceEmbeddingProvider(const std::vector<std::string>& sentences,
                                                             std::size_t dim, WordSet stopwords,
                                                             double own_weight)
    : dim_(dim), stopwords_(std::move(stopwords)) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(sentences.size());
  std::map<std::string, std::size_t> df;
  for (const auto& s : sentences) {
    auto words = content_words(s, stopwords_);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    for (const auto& w : words) ++df[w];
    docs.push_back(std::move(words));
  }
  const double n = static_cast<double>(sentences.size());
  default_idf_ = std::log(1.0 + n) + 1.0;
  std::unordered_map<std::string, std::vector<double>> own;
  std::unordered_map<std::string, std::vector<double>> context;
  for (const auto& [w, count] : df) {
    idf_[w] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
    own[w] = random_unit_vector(w, dim_);
    context[w] = std::vector<double>(dim_, 0.0);
  }
  std::vector<double> sum(dim_);
  for (const auto& words : docs) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (const auto& w : words) add_scaled(sum, own[w], idf_[w]);
    for (const auto& w : words) {
      auto& c = context[w];
      add_scaled(c, sum, 1.0);
      add_scaled(c, own[w], -idf_[w]);
    }
  }
  std::string fingerprint = std::to_string(dim_) + "/" + std::to_string(own_weight) + "\n";
  for (const auto& [w, count] : df) {
    auto v = own[w];
    for (double& x : v) x *= own_weight;
    auto c = context[w];
    normalize_in_place(c);
    add_scaled(v, c, 1.0);
    normalize_in_place(v);
    vectors_[w] = std::move(v);
    fingerprint += w + " " + std::to_string(count) + "\n";
  }
  // Vectors depend on which words share sentences, not only on frequencies,
  // so the identity covers the full training text.
  fingerprint += sha256_hex(join(sentences, "\n"));
  id_ = "cooc-v1:" + sha256_hex(fingerprint).substr(0, 16);
}

std::vector<std::vector<double>> CooccurrenceEmbeddingProvider::embed_raw(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<double> acc(dim_, 0.0);
    auto words = content_words(t, stopwords_);
    for (const auto& w : words) {
      auto it = vectors_.find(w);
      if (it != vectors_.end()) {
        add_scaled(acc, it->second, idf_.at(w));
      } else {
        add_scaled(acc, random_unit_vector(w, dim_), default_idf_);
      }
    }
    if (words.empty()) acc = random_unit_vector("\x01text:" + t, dim_);
    out.push_back(std::move(acc));
  }
  return out;
}

// ---- cache ---------------------------------------------------------------

namespace {

std::string hex_to_bytes(const std::string& hex) {
  std::string out(hex.size() / 2, '\0');
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<char>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
  }
  return out;
}

std::string bytes_to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path dir, std::string provider_id)
    : path_(dir / (sha256_hex(provider_id).substr(0, 16) + ".bin")) {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  while (true) {
    char hash[32];
    std::uint32_t d = 0;
    if (!in.read(hash, 32)) break;
    if (!in.read(reinterpret_cast<char*>(&d), sizeof d)) break;
    std::vector<float> values(d);
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(d * sizeof(float)))) break;
    entries_[bytes_to_hex(std::string_view(hash, 32))] = std::move(values);
  }
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& text_hash) const {
  auto it = entries_.find(text_hash);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& text_hash, std::vector<float> values) {
  if (entries_.emplace(text_hash, std::move(values)).second) pending_.push_back(text_hash);
}

void EmbeddingCache::flush() {
  if (pending_.empty()) return;
  std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  for (const auto& h : pending_) {
    const auto& values = entries_.at(h);
    const auto raw = hex_to_bytes(h);
    const auto d = static_cast<std::uint32_t>(values.size());
    out.write(raw.data(), 32);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(d * sizeof(float)));
  }
  pending_.clear();
}

// ---- embedder ------------------------------------------------------------

Embedder::Embedder(EmbeddingProvider& provider, EmbeddingCache* cache) : provider_(provider), cache_(cache) {}

std::vector<EmbeddingVector> Embedder::embed_batch(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> hashes(texts.size());
  std::vector<std::size_t> missing;
  auto check_dim = [&](std::size_t d) {
    if (dim_ == 0) dim_ = d;
    if (d != dim_) {
      throw DimensionMismatch("embedding dimension changed from " + std::to_string(dim_) + " to " +
                              std::to_string(d));
    }
  };
  for (std::size_t i = 0; i < texts.size(); ++i) {
    hashes[i] = sha256_hex(texts[i]);
    std::optional<std::vector<float>> hit;
    if (cache_) hit = cache_->get(hashes[i]);
    if (hit) {
      check_dim(hit->size());
      std::vector<double> v(hit->begin(), hit->end());
      double sq = 0.0;
      for (double x : v) sq += x * x;
      out[i] = {std::move(v), std::sqrt(sq)};
    } else {
      missing.push_back(i);
    }
  }
  if (missing.empty()) return out;
  std::vector<std::string> request;
  request.reserve(missing.size());
  for (auto i : missing) request.push_back(texts[i]);
  auto raw = provider_.embed_raw(request);
  if (raw.size() != request.size()) {
    throw EmbeddingUnavailable("provider returned " + std::to_string(raw.size()) + " vectors for " +
                               std::to_string(request.size()) + " texts");
  }
  for (std::size_t m = 0; m < missing.size(); ++m) {
    check_dim(raw[m].size());
    auto v = canonicalize(raw[m]);
    if (cache_) cache_->put(hashes[missing[m]], std::vector<float>(v.values.begin(), v.values.end()));
    out[missing[m]] = std::move(v);
  }
  if (cache_) cache_->flush();
  return out;
}

EmbeddingVector Embedder::embed(const std::string& text) { return embed_batch({text}).front(); }

std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts, EmbeddingProvider& provider) {
  Embedder e(provider);
  return e.embed_batch(texts);
}

// ---- retrieval -----------------------------------------------------------

KeywordSentenceMap match_sentences(const std::vector<std::string>& keywords,
                                   const std::vector<EmbeddingVector>& keyword_vectors,
                                   const std::vector<corpus::CleanSentence>& sentences,
                                   const std::vector<EmbeddingVector>& sentence_vectors,
                                   double threshold, unsigned threads) {
  if (keywords.size() != keyword_vectors.size() || sentences.size() != sentence_vectors.size()) {
    throw DimensionMismatch("match_sentences: inputs and vectors differ in length");
  }
  std::vector<std::vector<SentenceMatch>> slots(keywords.size());
  parallel_for(keywords.size(), threads, [&](std::size_t k) {
    auto& list = slots[k];
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      const double sim = dot(keyword_vectors[k].values, sentence_vectors[s].values);
      if (sim >= threshold) list.push_back({sentences[s].doc_id, sentences[s].sent_index, sim});
    }
    std::sort(list.begin(), list.end(), [](const SentenceMatch& a, const SentenceMatch& b) {
      if (a.similarity != b.similarity) return a.similarity > b.similarity;
      if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
      return a.sent_index < b.sent_index;
    });
  });
  KeywordSentenceMap map;
  for (std::size_t k = 0; k < keywords.size(); ++k) map[keywords[k]] = std::move(slots[k]);
  return map;
}

std::string map_to_jsonl(const KeywordSentenceMap& map) {
  std::string out;
  for (const auto& [kw, list] : map) {
    for (const auto& m : list) {
      out += json{{"keyword", kw}, {"doc_id", m.doc_id}, {"sent_index", m.sent_index}, {"similarity", m.similarity}}
                 .dump();
      out += '\n';
    }
  }
  return out;
}

KeywordSentenceMap load_map(const std::filesystem::path& path) {
  KeywordSentenceMap map;
  for (const auto& j : read_jsonl(path)) {
    map[j.at("keyword").get<std::string>()].push_back(
        {j.at("doc_id").get<std::string>(), j.at("sent_index").get<int>(), j.at("similarity").get<double>()});
  }
  return map;
}

}  // namespace domainbench::retrieval
