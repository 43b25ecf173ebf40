#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "domainbench/corpus.hpp"
#include "domainbench/util.hpp"

namespace domainbench::retrieval {

/// Unit-normalized embedding. Values pass through float32 so a vector read
/// back from the on-disk cache is bit-identical to a freshly computed one.
struct EmbeddingVector {
  std::vector<double> values;
  double norm = 0.0;
};

double dot(std::span<const double> a, std::span<const double> b);

/// Source of raw (not necessarily normalized) text embeddings.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Stable identity; part of the cache key and the run manifest.
  virtual std::string id() const = 0;
  virtual std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) = 0;
};

/// Client for `POST /embed {texts} -> {dim, vectors}`.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  struct Options {
    int max_attempts = 3;
    int backoff_ms = 100;
    int timeout_s = 60;
    std::size_t batch_size = 64;
  };
  explicit HttpEmbeddingProvider(std::string base_url);
  HttpEmbeddingProvider(std::string base_url, Options options);
  std::string id() const override { return "http:" + base_url_; }
  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override;

 private:
  std::vector<std::vector<double>> request(const std::vector<std::string>& texts);
  std::string base_url_;
  Options options_;
};

/// Deterministic pseudo-random unit vector for a string.
std::vector<double> random_unit_vector(std::string_view key, std::size_t dim);

/// Bag-of-words random indexing: each content word maps to a fixed random
/// direction. No notion of relatedness beyond shared words.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  HashingEmbeddingProvider(std::size_t dim, WordSet stopwords);
  std::string id() const override;
  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override;

 private:
  std::size_t dim_;
  WordSet stopwords_;
};

/// Offline distributional embedder fitted on a sentence corpus. A word's
/// vector mixes its own random direction with the idf-weighted sum of the
/// directions of words it co-occurs with, so words from the same contexts end
/// up close. Texts embed as the idf-weighted mean of their word vectors.
class CooccurrenceEmbeddingProvider final : public EmbeddingProvider {
 public:
  CooccurrenceEmbeddingProvider(const std::vector<std::string>& sentences, std::size_t dim,
                                WordSet stopwords, double own_weight = 1.0);
  std::string id() const override { return id_; }
  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override;

  static std::vector<std::string> content_words(std::string_view text, const WordSet& stopwords);

 private:
  std::size_t dim_;
  WordSet stopwords_;
  std::string id_;
  double default_idf_ = 1.0;
  std::unordered_map<std::string, double> idf_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Binary cache of (text-hash, D, f32 values) records, one file per provider.
class EmbeddingCache {
 public:
  EmbeddingCache(std::filesystem::path dir, std::string provider_id);
  std::optional<std::vector<float>> get(const std::string& text_hash) const;
  void put(const std::string& text_hash, std::vector<float> values);
  /// Appends records added since the last flush.
  void flush();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::unordered_map<std::string, std::vector<float>> entries_;
  std::vector<std::string> pending_;
};

/// Normalizing, caching front end over a provider.
class Embedder {
 public:
  explicit Embedder(EmbeddingProvider& provider, EmbeddingCache* cache = nullptr);
  /// Throws DimensionMismatch when the provider changes dimension mid-run.
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts);
  EmbeddingVector embed(const std::string& text);
  const EmbeddingProvider& provider() const { return provider_; }
  std::size_t dim() const { return dim_; }

 private:
  EmbeddingProvider& provider_;
  EmbeddingCache* cache_;
  std::size_t dim_ = 0;
};

/// Normalizes and rounds through float32.
EmbeddingVector canonicalize(std::span<const double> raw);

std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                         EmbeddingProvider& provider);

struct SentenceMatch {
  std::string doc_id;
  int sent_index = 0;
  double similarity = 0.0;

  friend bool operator==(const SentenceMatch&, const SentenceMatch&) = default;
};

/// keyword -> matches, similarity descending, ties by (doc_id, sent_index).
using KeywordSentenceMap = std::map<std::string, std::vector<SentenceMatch>>;

KeywordSentenceMap match_sentences(const std::vector<std::string>& keywords,
                                   const std::vector<EmbeddingVector>& keyword_vectors,
                                   const std::vector<corpus::CleanSentence>& sentences,
                                   const std::vector<EmbeddingVector>& sentence_vectors,
                                   double threshold = 0.5, unsigned threads = 1);

std::string map_to_jsonl(const KeywordSentenceMap& map);
KeywordSentenceMap load_map(const std::filesystem::path& path);

}  // namespace domainbench::retrieval
