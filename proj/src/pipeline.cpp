#include "domainbench/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>

#include "domainbench/attribute.hpp"
#include "domainbench/corpus.hpp"
#include "domainbench/embedding.hpp"
#include "domainbench/errors.hpp"
#include "domainbench/eval.hpp"
#include "domainbench/phrases.hpp"
#include "domainbench/prompts.hpp"
#include "domainbench/report.hpp"
#include "domainbench/resources.hpp"
#include "domainbench/tokens.hpp"
#include "domainbench/wordlist.hpp"

namespace fs = std::filesystem;

namespace domainbench::pipeline {

// ---- config --------------------------------------------------------------

#define DOMAINBENCH_CONFIG_SCALARS(X)                                                                         \
  X(seed) X(domain) X(domain_phrase) X(threads) X(min_count) X(collocation_threshold) X(max_n) X(keyword_target) \
  X(keyword_proportions) X(dedup_threshold) X(embedder) X(embedder_url) X(embedding_dim) X(embedding_cache)      \
  X(sentence_threshold) X(term_threshold) X(min_df) X(max_df_tf) X(max_df_tfidf) X(tokenizer) X(tokenizer_url)   \
  X(token_capacity) X(methods) X(n_pairs) X(min_context_tokens) X(min_context_chars) X(scan_start)               \
  X(heldout_fraction) X(perplexity_window) X(max_failure_rate) X(attribute_k) X(pool_size) X(base_model)         \
  X(adapted_model)

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config field '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

ModelSpec model_from_json(const json& j) {
  static const std::set<std::string> known = {"id", "kind", "beta", "train_fraction", "context_limit", "url"};
  if (!j.is_object()) throw ConfigInvalid("model entries must be objects");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigInvalid("unknown model key '" + k + "'");
  }
  ModelSpec m;
  read_field(j, "id", m.id);
  read_field(j, "kind", m.kind);
  read_field(j, "beta", m.beta);
  read_field(j, "train_fraction", m.train_fraction);
  read_field(j, "context_limit", m.context_limit);
  read_field(j, "url", m.url);
  return m;
}

json model_to_json(const ModelSpec& m) {
  return json{{"id", m.id},
              {"kind", m.kind},
              {"beta", m.beta},
              {"train_fraction", m.train_fraction},
              {"context_limit", m.context_limit},
              {"url", m.url}};
}

}  // namespace

Config Config::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigInvalid("config must be a JSON object");
  static const std::set<std::string> known = {
#define X(name) #name,
      DOMAINBENCH_CONFIG_SCALARS(X)
#undef X
          "corpus_dir",
      "work_dir", "data_dir", "models", "dumps", "against"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigInvalid("unknown config key '" + k + "'");
  }
  Config c;
#define X(name) read_field(j, #name, c.name);
  DOMAINBENCH_CONFIG_SCALARS(X)
#undef X
  std::string path;
  path.clear();
  read_field(j, "corpus_dir", path);
  c.corpus_dir = resolve(base_dir, path);
  path.clear();
  read_field(j, "work_dir", path);
  c.work_dir = resolve(base_dir, path);
  path.clear();
  read_field(j, "data_dir", path);
  c.data_dir = path.empty() ? default_data_dir() : resolve(base_dir, path);
  path.clear();
  read_field(j, "against", path);
  c.against = resolve(base_dir, path);
  std::vector<std::string> dumps;
  read_field(j, "dumps", dumps);
  for (const auto& d : dumps) c.dumps.push_back(resolve(base_dir, d));
  if (j.contains("models")) {
    if (!j.at("models").is_array()) throw ConfigInvalid("'models' must be an array");
    for (const auto& m : j.at("models")) c.models.push_back(model_from_json(m));
  }
  c.validate();
  return c;
}

Config Config::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigInvalid("cannot parse config " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigInvalid(e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

json Config::to_json() const {
  json j;
#define X(name) j[#name] = name;
  DOMAINBENCH_CONFIG_SCALARS(X)
#undef X
  j["corpus_dir"] = corpus_dir.string();
  j["work_dir"] = work_dir.string();
  j["data_dir"] = data_dir.string();
  j["against"] = against.string();
  j["dumps"] = json::array();
  for (const auto& d : dumps) j["dumps"].push_back(d.string());
  j["models"] = json::array();
  for (const auto& m : models) j["models"].push_back(model_to_json(m));
  return j;
}

#undef DOMAINBENCH_CONFIG_SCALARS

void Config::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigInvalid(what);
  };
  require(!corpus_dir.empty(), "corpus_dir is required");
  require(!work_dir.empty(), "work_dir is required");
  require(threads >= 1, "threads must be at least 1");
  require(min_count >= 0, "min_count must be non-negative");
  require(max_n >= 2, "max_n must be at least 2");
  require(keyword_target >= 0, "keyword_target must be non-negative");
  double psum = 0.0;
  for (double p : keyword_proportions) {
    require(p >= 0.0, "keyword_proportions must be non-negative");
    psum += p;
  }
  require(std::abs(psum - 1.0) <= 1e-9, "keyword_proportions must sum to 1");
  require(dedup_threshold >= -1.0 && dedup_threshold <= 1.0, "dedup_threshold must lie in [-1, 1]");
  require(embedder == "cooccurrence" || embedder == "hashing" || embedder == "http",
          "embedder must be cooccurrence, hashing or http");
  require(embedder != "http" || !embedder_url.empty(), "embedder http needs embedder_url");
  require(embedding_dim > 0, "embedding_dim must be positive");
  require(sentence_threshold >= -1.0 && sentence_threshold <= 1.0, "sentence_threshold must lie in [-1, 1]");
  require(term_threshold >= -1.0 && term_threshold <= 1.0, "term_threshold must lie in [-1, 1]");
  require(min_df >= 0.0 && min_df <= 1.0, "min_df must lie in [0, 1]");
  require(max_df_tf > 0.0 && max_df_tf <= 1.0 && max_df_tfidf > 0.0 && max_df_tfidf <= 1.0,
          "max_df values must lie in (0, 1]");
  require(tokenizer == "piece" || tokenizer == "http", "tokenizer must be piece or http");
  require(tokenizer != "http" || !tokenizer_url.empty(), "tokenizer http needs tokenizer_url");
  require(token_capacity > 0, "token_capacity must be positive");
  require(!methods.empty(), "methods must not be empty");
  std::set<std::string> seen_methods;
  for (const auto& m : methods) {
    require(seen_methods.insert(wordlist::method_name(wordlist::parse_method(m))).second, "duplicate method " + m);
  }
  require(n_pairs > 0, "n_pairs must be positive");
  require(scan_start <= min_context_tokens, "scan_start must not exceed min_context_tokens");
  require(heldout_fraction >= 0.0 && heldout_fraction < 1.0, "heldout_fraction must lie in [0, 1)");
  require(perplexity_window > 0, "perplexity_window must be positive");
  require(max_failure_rate >= 0.0 && max_failure_rate <= 1.0, "max_failure_rate must lie in [0, 1]");
  require(attribute_k > 0, "attribute_k must be positive");
  require(pool_size > 0, "pool_size must be positive");
  std::set<std::string> ids;
  for (const auto& m : models) {
    require(!m.id.empty(), "model id must not be empty");
    require(m.id.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789._-") ==
                std::string::npos,
            "model id '" + m.id + "' may only use letters, digits, '.', '_' and '-'");
    require(ids.insert(m.id).second, "duplicate model id " + m.id);
    require(m.kind == "bigram" || m.kind == "uniform" || m.kind == "http", "model kind must be bigram, uniform or http");
    require(m.kind != "http" || !m.url.empty(), "http model needs url");
    require(m.beta > 0.0, "model beta must be positive");
    require(m.train_fraction > 0.0 && m.train_fraction <= 1.0, "train_fraction must lie in (0, 1]");
    require(m.context_limit > 0, "context_limit must be positive");
  }
  require(base_model.empty() || ids.contains(base_model), "base_model is not a configured model");
  require(adapted_model.empty() || ids.contains(adapted_model), "adapted_model is not a configured model");
}

// ---- manifest ------------------------------------------------------------

json load_manifest(const fs::path& work_dir) {
  const auto path = work_dir / "manifest.json";
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw StaleArtifact("manifest is unreadable: " + std::string(e.what()));
  }
}

namespace {

struct Context {
  const Config& cfg;
  Resources res;
  json manifest;
  json stage_entry;  // entry under construction
  std::vector<std::string> warnings;

  fs::path file(const std::string& name) const { return cfg.work_dir / name; }
};

std::string corpus_hash(const Config& cfg) {
  return sha256_hex(sha256_file(cfg.corpus_dir / "metadata.jsonl") + sha256_file(cfg.corpus_dir / "fulltext.jsonl"));
}

/// Config identity without machine-specific paths; external inputs enter by
/// content hash instead.
std::string config_hash(const Config& cfg) {
  json j = cfg.to_json();
  j.erase("corpus_dir");
  j.erase("work_dir");
  j.erase("data_dir");
  j["dumps"] = json::array();
  for (const auto& d : cfg.dumps) j["dumps"].push_back(sha256_file(d));
  j["against"] = cfg.against.empty() ? std::string() : sha256_file(cfg.against);
  return sha256_hex(j.dump());
}

/// Hash of `name` as recorded by whichever stage produced it.
std::optional<std::string> recorded_output(const json& manifest, const std::string& name, std::string* producer) {
  if (!manifest.contains("stages")) return std::nullopt;
  for (const auto& [stage, entry] : manifest.at("stages").items()) {
    const auto& outs = entry.at("outputs");
    if (outs.contains(name)) {
      if (producer) *producer = stage;
      return outs.at(name).get<std::string>();
    }
  }
  return std::nullopt;
}

/// Checks every earlier stage's inputs against the outputs recorded by their
/// producers, then checks that each file about to be read still has its
/// recorded hash.
void verify_inputs(Context& ctx, const std::string& stage, const std::vector<std::string>& names) {
  const auto& m = ctx.manifest;
  const auto pos = std::find(kStages.begin(), kStages.end(), stage) - kStages.begin();
  if (m.contains("stages")) {
    for (auto i = 0; i < pos; ++i) {
      const auto& s = kStages[static_cast<std::size_t>(i)];
      if (!m.at("stages").contains(s)) continue;
      for (const auto& [name, hash] : m.at("stages").at(s).at("inputs").items()) {
        const auto rec = recorded_output(m, name, nullptr);
        if (!rec || *rec != hash.get<std::string>()) {
          throw StaleArtifact("stage '" + s + "' consumed a version of " + name + " that is no longer current");
        }
      }
    }
  }
  for (const auto& name : names) {
    std::string producer;
    const auto rec = recorded_output(m, name, &producer);
    if (!rec) throw StaleArtifact("artifact " + name + " has not been produced; run its stage first");
    const auto path = ctx.file(name);
    if (!fs::exists(path)) throw StaleArtifact("artifact " + name + " is missing from " + ctx.cfg.work_dir.string());
    const auto actual = sha256_file(path);
    if (actual != *rec) {
      throw StaleArtifact("artifact " + name + " changed since stage '" + producer + "' wrote it");
    }
    ctx.stage_entry["inputs"][name] = actual;
  }
}

void write_output(Context& ctx, const std::string& name, const std::string& contents) {
  write_file(ctx.file(name), contents);
  ctx.stage_entry["outputs"][name] = sha256_hex(contents);
}

void begin_stage(Context& ctx) {
  ctx.stage_entry = json{{"inputs", json::object()}, {"outputs", json::object()}, {"stats", json::object()}};
  ctx.warnings.clear();
}

void finish_stage(Context& ctx, const std::string& stage) {
  auto& m = ctx.manifest;
  const auto pos = std::find(kStages.begin(), kStages.end(), stage) - kStages.begin();
  if (m.contains("stages")) {
    // Later stages were computed from artifacts this run may have replaced.
    for (auto i = static_cast<std::size_t>(pos) + 1; i < kStages.size(); ++i) m["stages"].erase(kStages[i]);
  }
  ctx.stage_entry["warnings"] = ctx.warnings;
  ctx.stage_entry["hash"] = sha256_hex(ctx.stage_entry.at("outputs").dump());
  m["stages"][stage] = ctx.stage_entry;
  write_file(ctx.file("manifest.json"), m.dump(2) + "\n");
}

// ---- shared helpers ------------------------------------------------------

std::vector<corpus::CleanSentence> sentences_of(Context& ctx) {
  return corpus::load_sentences(ctx.file("sentences.jsonl"));
}

std::vector<std::string> texts_of(const std::vector<corpus::CleanSentence>& sentences) {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.text);
  return out;
}

struct EmbedderBundle {
  std::unique_ptr<retrieval::EmbeddingProvider> provider;
  std::unique_ptr<retrieval::EmbeddingCache> cache;
  std::unique_ptr<retrieval::Embedder> embedder;

  ~EmbedderBundle() {
    if (cache) cache->flush();
  }
};

std::unique_ptr<EmbedderBundle> make_embedder(Context& ctx, const std::vector<corpus::CleanSentence>& sentences) {
  auto b = std::make_unique<EmbedderBundle>();
  const auto& cfg = ctx.cfg;
  if (cfg.embedder == "http") {
    b->provider = std::make_unique<retrieval::HttpEmbeddingProvider>(cfg.embedder_url);
  } else if (cfg.embedder == "hashing") {
    b->provider = std::make_unique<retrieval::HashingEmbeddingProvider>(cfg.embedding_dim, ctx.res.filters.stopwords);
  } else {
    b->provider = std::make_unique<retrieval::CooccurrenceEmbeddingProvider>(texts_of(sentences), cfg.embedding_dim,
                                                                           ctx.res.filters.stopwords);
  }
  if (cfg.embedding_cache) {
    b->cache = std::make_unique<retrieval::EmbeddingCache>(cfg.work_dir / "embedding_cache", b->provider->id());
  }
  b->embedder = std::make_unique<retrieval::Embedder>(*b->provider, b->cache.get());
  ctx.stage_entry["stats"]["embedder"] = b->provider->id();
  return b;
}

std::unique_ptr<tokens::Tokenizer> load_tokenizer(Context& ctx) {
  const auto j = json::parse(read_file(ctx.file("tokenizer.json")));
  if (j.value("kind", std::string("piece")) == "http") {
    auto t = std::make_unique<tokens::HttpTokenizer>(j.at("url").get<std::string>());
    if (t->id() != j.at("id").get<std::string>()) {
      throw TokenizerMismatch("remote tokenizer is now " + t->id() + ", artifacts used " + j.at("id").get<std::string>());
    }
    return t;
  }
  return std::make_unique<tokens::PieceTokenizer>(tokens::PieceTokenizer::load(ctx.file("tokenizer.json")));
}

struct DocSplit {
  std::vector<std::string> train_pool;  // doc ids, sorted
  std::vector<std::string> heldout;
};

DocSplit split_documents(const Config& cfg, const std::vector<corpus::CleanSentence>& sentences) {
  std::set<std::string> ids;
  for (const auto& s : sentences) ids.insert(s.doc_id);
  std::vector<std::string> docs(ids.begin(), ids.end());
  auto held = static_cast<std::size_t>(std::llround(cfg.heldout_fraction * static_cast<double>(docs.size())));
  if (cfg.heldout_fraction > 0.0 && docs.size() >= 2) held = std::max<std::size_t>(held, 1);
  held = std::min(held, docs.size() > 0 ? docs.size() - 1 : 0);
  DocSplit split;
  split.train_pool.assign(docs.begin(), docs.end() - static_cast<std::ptrdiff_t>(held));
  split.heldout.assign(docs.end() - static_cast<std::ptrdiff_t>(held), docs.end());
  return split;
}

std::vector<std::unique_ptr<eval::Scorer>> make_models(Context& ctx, const std::vector<corpus::CleanSentence>& sentences,
                                                       const tokens::Tokenizer& tokenizer) {
  const auto split = split_documents(ctx.cfg, sentences);
  std::vector<std::unique_ptr<eval::Scorer>> out;
  for (const auto& spec : ctx.cfg.models) {
    const eval::DistributionScorer::Info info{spec.id, spec.context_limit, tokenizer.vocab_size(), tokenizer.id()};
    if (spec.kind == "http") {
      auto s = std::make_unique<eval::HttpScorer>(spec.url);
      if (s->tokenizer_id() != tokenizer.id()) {
        throw TokenizerMismatch("scorer " + spec.url + " uses tokenizer " + s->tokenizer_id() + ", pipeline uses " +
                                tokenizer.id());
      }
      out.push_back(std::move(s));
    } else if (spec.kind == "uniform") {
      const std::size_t v = tokenizer.vocab_size();
      out.push_back(std::make_unique<eval::FunctionScorer>(
          info, [v](std::span<const tokens::TokenId>) { return std::vector<double>(v, 1.0 / static_cast<double>(v)); }));
    } else {
      const auto take = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(spec.train_fraction * static_cast<double>(split.train_pool.size()))));
      const std::set<std::string> train(split.train_pool.begin(),
                                        split.train_pool.begin() +
                                            static_cast<std::ptrdiff_t>(std::min(take, split.train_pool.size())));
      std::vector<std::vector<tokens::TokenId>> streams;
      for (const auto& s : sentences) {
        if (train.contains(s.doc_id)) streams.push_back(tokenizer.encode(s.text));
      }
      out.push_back(std::make_unique<eval::BigramScorer>(info, streams, spec.beta));
    }
  }
  return out;
}

std::vector<wordlist::Method> methods_of(const Config& cfg) {
  std::vector<wordlist::Method> out;
  for (const auto& m : cfg.methods) out.push_back(wordlist::parse_method(m));
  return out;
}

std::string wordlist_file(wordlist::Method m) { return "wordlist_" + wordlist::method_name(m) + ".jsonl"; }
std::string pairs_file(wordlist::Method m) { return "pairs_" + wordlist::method_name(m) + ".jsonl"; }
std::string scores_file(const std::string& model, wordlist::Method m) {
  return "scores_" + model + "_" + wordlist::method_name(m) + ".jsonl";
}

// ---- stages --------------------------------------------------------------

void stage_ingest(Context& ctx) {
  auto corpus = corpus::load_corpus(ctx.cfg.corpus_dir);
  if (!ctx.cfg.domain.empty()) {
    std::erase_if(corpus.meta, [&](const corpus::DocumentMeta& m) {
      return std::find(m.categories.begin(), m.categories.end(), ctx.cfg.domain) == m.categories.end();
    });
  }
  const corpus::RuleSegmenter segmenter(ctx.res.abbreviations);
  const corpus::SentenceCleaner cleaner(ctx.res.citation_patterns);
  corpus::IngestStats stats;
  const auto sentences = corpus::ingest(corpus, segmenter, cleaner, ctx.cfg.threads, &stats);
  if (sentences.empty()) throw EmptyCorpus("no clean sentences in " + ctx.cfg.corpus_dir.string());
  std::vector<json> records;
  records.reserve(sentences.size());
  for (const auto& s : sentences) records.push_back(corpus::to_json(s));
  write_output(ctx, "sentences.jsonl", to_jsonl(records));
  ctx.stage_entry["stats"] = {{"documents", stats.documents},
                              {"raw_sentences", stats.raw_sentences},
                              {"rejected", stats.rejected},
                              {"sentences", sentences.size()},
                              {"segmenter", segmenter.id()}};
  ctx.warnings.insert(ctx.warnings.end(), stats.warnings.begin(), stats.warnings.end());
}

void stage_keywords(Context& ctx) {
  verify_inputs(ctx, "keywords", {"sentences.jsonl"});
  const auto sentences = sentences_of(ctx);
  std::vector<std::vector<std::string>> streams;
  streams.reserve(sentences.size());
  for (const auto& s : sentences) streams.push_back(phrases::tokenize_for_mining(s.text));
  const phrases::MiningOptions mopt{ctx.cfg.min_count, ctx.cfg.collocation_threshold, ctx.cfg.max_n};
  const auto mined = phrases::mine_phrases(streams, mopt);
  const phrases::DictionaryLemmatizer lemmatizer(ctx.res.lemma_exceptions);
  const auto filtered = phrases::filter_candidates(mined, ctx.res.filters, lemmatizer);
  const auto selection = phrases::select_keywords(filtered, {ctx.cfg.keyword_target, ctx.cfg.keyword_proportions});
  auto bundle = make_embedder(ctx, sentences);
  const auto keywords = phrases::dedup_keywords(selection.keywords, *bundle->embedder, ctx.cfg.dedup_threshold);
  write_output(ctx, "keywords.jsonl", phrases::keywords_to_jsonl(keywords));
  ctx.stage_entry["stats"]["mined"] = mined.size();
  ctx.stage_entry["stats"]["filtered"] = filtered.size();
  ctx.stage_entry["stats"]["selected"] = selection.keywords.size();
  ctx.stage_entry["stats"]["deduplicated"] = keywords.size();
  ctx.stage_entry["stats"]["initial_quotas"] = selection.initial_quotas;
  ctx.stage_entry["stats"]["final_quotas"] = selection.final_quotas;
  ctx.warnings.insert(ctx.warnings.end(), selection.warnings.begin(), selection.warnings.end());
}

void stage_retrieve(Context& ctx) {
  verify_inputs(ctx, "retrieve", {"sentences.jsonl", "keywords.jsonl"});
  const auto sentences = sentences_of(ctx);
  const auto keywords = phrases::load_keywords(ctx.file("keywords.jsonl"));
  auto bundle = make_embedder(ctx, sentences);
  std::vector<std::string> surfaces;
  for (const auto& k : keywords) surfaces.push_back(k.surface);
  const auto kvecs = bundle->embedder->embed_batch(surfaces);
  const auto svecs = bundle->embedder->embed_batch(texts_of(sentences));
  const auto map =
      retrieval::match_sentences(surfaces, kvecs, sentences, svecs, ctx.cfg.sentence_threshold, ctx.cfg.threads);
  write_output(ctx, "keyword_map.jsonl", retrieval::map_to_jsonl(map));
  std::size_t entries = 0;
  std::size_t empty = 0;
  for (const auto& [k, v] : map) {
    entries += v.size();
    if (v.empty()) ++empty;
  }
  ctx.stage_entry["stats"]["keywords"] = map.size();
  ctx.stage_entry["stats"]["entries"] = entries;
  ctx.stage_entry["stats"]["keywords_without_sentences"] = empty;
}

void stage_wordlists(Context& ctx) {
  verify_inputs(ctx, "wordlists", {"sentences.jsonl", "keyword_map.jsonl"});
  const auto sentences = sentences_of(ctx);
  const auto map = retrieval::load_map(ctx.file("keyword_map.jsonl"));
  const auto docs = wordlist::build_keyword_documents(map, sentences);
  auto bundle = make_embedder(ctx, sentences);
  for (auto method : methods_of(ctx.cfg)) {
    const double max_df = method == wordlist::Method::TF ? ctx.cfg.max_df_tf : ctx.cfg.max_df_tfidf;
    const auto result = wordlist::build_wordlists(docs, method, ctx.cfg.min_df, max_df, *bundle->embedder,
                                                  ctx.res.filters.stopwords, ctx.cfg.term_threshold);
    write_output(ctx, wordlist_file(method), wordlist::wordlists_to_jsonl(result.lists));
    ctx.stage_entry["stats"][wordlist::method_name(method) + "_lists"] = result.lists.size();
    ctx.warnings.insert(ctx.warnings.end(), result.warnings.begin(), result.warnings.end());
  }
}

void stage_tokens(Context& ctx) {
  verify_inputs(ctx, "tokens", {"sentences.jsonl", "keyword_map.jsonl"});
  const auto sentences = sentences_of(ctx);
  const auto map = retrieval::load_map(ctx.file("keyword_map.jsonl"));
  std::unique_ptr<tokens::Tokenizer> tokenizer;
  if (ctx.cfg.tokenizer == "http") {
    tokenizer = std::make_unique<tokens::HttpTokenizer>(ctx.cfg.tokenizer_url);
    write_output(ctx, "tokenizer.json",
                 json{{"kind", "http"}, {"id", tokenizer->id()}, {"url", ctx.cfg.tokenizer_url}}.dump() + "\n");
  } else {
    auto piece = tokens::PieceTokenizer::train(texts_of(sentences));
    piece.save(ctx.file("tokenizer.json"));
    ctx.stage_entry["outputs"]["tokenizer.json"] = sha256_file(ctx.file("tokenizer.json"));
    tokenizer = std::make_unique<tokens::PieceTokenizer>(std::move(piece));
  }
  std::map<std::pair<std::string_view, int>, const std::string*> by_key;
  for (const auto& s : sentences) by_key[{s.doc_id, s.sent_index}] = &s.text;
  std::vector<tokens::TokenList> lists;
  for (const auto& [keyword, matches] : map) {
    std::vector<std::string> texts;
    for (const auto& m : matches) {
      if (auto it = by_key.find({m.doc_id, m.sent_index}); it != by_key.end()) texts.push_back(*it->second);
    }
    try {
      lists.push_back(tokens::profile_tokens(keyword, texts, *tokenizer, ctx.res.filters.stopwords,
                                             ctx.cfg.token_capacity));
    } catch (const NoSentences& e) {
      ctx.warnings.push_back(std::string("NoSentences: ") + e.what());
    }
  }
  write_output(ctx, "token_lists.jsonl", tokens::token_lists_to_jsonl(lists));
  ctx.stage_entry["stats"]["tokenizer_id"] = tokenizer->id();
  ctx.stage_entry["stats"]["vocab_size"] = tokenizer->vocab_size();
  ctx.stage_entry["stats"]["lists"] = lists.size();
}

void stage_prompts(Context& ctx) {
  std::vector<std::string> inputs{"sentences.jsonl", "keyword_map.jsonl", "tokenizer.json"};
  for (auto m : methods_of(ctx.cfg)) inputs.push_back(wordlist_file(m));
  verify_inputs(ctx, "prompts", inputs);
  const auto sentences = sentences_of(ctx);
  const auto map = retrieval::load_map(ctx.file("keyword_map.jsonl"));
  const auto tokenizer = load_tokenizer(ctx);
  const prompts::PairOptions popt{ctx.cfg.n_pairs, ctx.cfg.min_context_tokens, ctx.cfg.min_context_chars,
                                  ctx.cfg.scan_start};
  for (auto method : methods_of(ctx.cfg)) {
    const auto lists = wordlist::load_wordlists(ctx.file(wordlist_file(method)), method);
    std::vector<prompts::PromptTarget> all;
    std::size_t underfull = 0;
    json rejected = {{"char_floor", 0}, {"round_trip", 0}};
    for (const auto& list : lists) {
      auto it = map.find(list.keyword);
      if (it == map.end()) continue;
      prompts::PairStats stats;
      auto pairs = prompts::build_pairs(list.keyword, it->second, sentences, list, *tokenizer, ctx.cfg.seed, popt,
                                        &stats);
      if (stats.underfull) ++underfull;
      rejected["char_floor"] = rejected["char_floor"].get<std::size_t>() + stats.rejected_char_floor;
      rejected["round_trip"] = rejected["round_trip"].get<std::size_t>() + stats.rejected_round_trip;
      all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
    }
    write_output(ctx, pairs_file(method), prompts::pairs_to_jsonl(all));
    const auto name = wordlist::method_name(method);
    ctx.stage_entry["stats"][name] = {
        {"pairs", all.size()}, {"keywords", lists.size()}, {"underfull_keywords", underfull}, {"rejected", rejected}};
    if (underfull > 0) {
      ctx.warnings.push_back(name + ": " + std::to_string(underfull) + " keywords produced fewer than " +
                             std::to_string(ctx.cfg.n_pairs) + " pairs");
    }
  }
}

void stage_eval(Context& ctx) {
  std::vector<std::string> inputs{"sentences.jsonl", "tokenizer.json"};
  for (auto m : methods_of(ctx.cfg)) inputs.push_back(pairs_file(m));
  verify_inputs(ctx, "eval", inputs);
  if (ctx.cfg.models.empty()) throw ConfigInvalid("eval needs at least one model");
  const auto sentences = sentences_of(ctx);
  const auto tokenizer = load_tokenizer(ctx);
  const auto models = make_models(ctx, sentences, *tokenizer);
  std::size_t min_limit = models.front()->context_limit();
  for (const auto& m : models) min_limit = std::min(min_limit, m->context_limit());

  std::vector<json> summaries;
  for (auto method : methods_of(ctx.cfg)) {
    const auto pairs = prompts::load_pairs(ctx.file(pairs_file(method)));
    std::vector<eval::EncodedPair> encoded;
    encoded.reserve(pairs.size());
    for (const auto& p : pairs) encoded.push_back(eval::encode_pair(p, *tokenizer));
    const auto filter = eval::filter_by_context(encoded, min_limit);
    const auto name = wordlist::method_name(method);
    ctx.stage_entry["stats"][name]["excluded_by_context"] = filter.excluded.size();
    for (const auto& model : models) {
      const auto result =
          eval::evaluate(*model, pairs, encoded, filter.kept, ctx.cfg.threads, ctx.cfg.max_failure_rate);
      std::vector<json> records;
      for (const auto& r : result.records) records.push_back(eval::to_json(r));
      write_output(ctx, scores_file(model->model_id(), method), to_jsonl(records));
      ctx.stage_entry["stats"][name]["failures"][model->model_id()] = result.failures.size();
      if (result.invalid) {
        ctx.warnings.push_back(name + "/" + model->model_id() + ": run invalid, " +
                               std::to_string(result.failures.size()) + " of " + std::to_string(result.attempted) +
                               " pairs failed");
      }
      try {
        auto j = eval::to_json(eval::summarize(result.records, model->model_id(), name));
        j["invalid"] = result.invalid;
        j["failures"] = result.failures.size();
        summaries.push_back(j);
      } catch (const InsufficientRecords& e) {
        ctx.warnings.push_back(name + "/" + model->model_id() + ": " + e.what());
      }
    }
  }
  write_output(ctx, "summaries.jsonl", to_jsonl(summaries));

  const auto split = split_documents(ctx.cfg, sentences);
  const std::set<std::string> held(split.heldout.begin(), split.heldout.end());
  std::vector<tokens::TokenId> stream;
  for (const auto& s : sentences) {
    if (held.contains(s.doc_id)) {
      const auto ids = tokenizer->encode(s.text);
      stream.insert(stream.end(), ids.begin(), ids.end());
    }
  }
  std::vector<json> ppl;
  for (const auto& model : models) {
    const std::size_t window = std::min(ctx.cfg.perplexity_window, model->context_limit());
    json rec{{"model_id", model->model_id()}, {"tokens", stream.size()}, {"window", window}};
    try {
      rec["perplexity"] = eval::perplexity(*model, stream, window);
    } catch (const EmptyCorpus& e) {
      rec["perplexity"] = nullptr;
      ctx.warnings.push_back(std::string("perplexity: ") + e.what());
    }
    ppl.push_back(rec);
  }
  write_output(ctx, "perplexity.jsonl", to_jsonl(ppl));
}

std::string curve_csv(const std::vector<attribute::AttributeCurve>& curves) {
  std::string csv = report::csv_row({"model_id", "layer", "attribute_rate", "prob_sum", "in_list_prob", "out_list_prob",
                                     "normalized"});
  for (const auto& c : curves) {
    for (std::size_t l = 0; l < c.layers.size(); ++l) {
      const auto& p = c.layers[l];
      csv += report::csv_row({c.model_id, std::to_string(l), report::format_double(p.attribute_rate),
                              report::format_double(p.prob_sum), report::format_double(p.in_list_prob),
                              report::format_double(p.out_list_prob), c.normalized ? "true" : "false"});
    }
  }
  return csv;
}

json optional_series(const attribute::PercentDifference& d) {
  json out = json::array();
  for (const auto& v : d.values) out.push_back(v ? json(*v) : json(nullptr));
  return out;
}

void stage_attribute(Context& ctx) {
  verify_inputs(ctx, "attribute", {"sentences.jsonl", "tokenizer.json", "token_lists.jsonl"});
  const auto sentences = sentences_of(ctx);
  const auto tokenizer = load_tokenizer(ctx);
  const auto lists = tokens::load_token_lists(ctx.file("token_lists.jsonl"));
  tokens::require_tokenizer(lists, tokenizer->id());
  const auto models = make_models(ctx, sentences, *tokenizer);
  const auto& stop = ctx.res.filters.stopwords;
  const std::size_t k = ctx.cfg.attribute_k;

  std::vector<json> last;
  std::map<std::string, double> model_mean;
  for (const auto& model : models) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& list : lists) {
      json rec{{"model_id", model->model_id()}, {"keyword", list.keyword}, {"k", k}, {"pool_size", ctx.cfg.pool_size}};
      try {
        const double rate =
            attribute::last_layer_attribute(*model, *tokenizer, list.keyword, list.pool(ctx.cfg.pool_size), stop, k);
        rec["attribute_rate"] = rate;
        sum += rate;
        ++n;
      } catch (const InsufficientTokens& e) {
        rec["attribute_rate"] = nullptr;
        ctx.warnings.push_back(model->model_id() + "/" + list.keyword + ": " + e.what());
      }
      last.push_back(rec);
    }
    if (n > 0) model_mean[model->model_id()] = sum / static_cast<double>(n);
  }
  write_output(ctx, "attribute_last_layer.jsonl", to_jsonl(last));
  ctx.stage_entry["stats"]["last_layer_mean"] = model_mean;

  if (ctx.cfg.dumps.empty()) return;
  std::map<std::string, tokens::TokenList> by_keyword;
  for (const auto& l : lists) by_keyword.emplace(l.keyword, l);
  std::map<std::string, std::vector<attribute::AttributeCurve>> per_model;
  std::map<std::string, std::vector<attribute::LayerDump>> traces;
  for (const auto& path : ctx.cfg.dumps) {
    ctx.stage_entry["inputs"][path.filename().string()] = sha256_file(path);
    for (const auto& dump : attribute::load_dumps(path)) {
      if (dump.tokenizer_id != tokenizer->id()) {
        throw TokenizerMismatch("dump " + path.string() + " uses tokenizer " + dump.tokenizer_id);
      }
      const bool has_targets = !dump.layers.empty() && dump.layers.front().target_rank.has_value();
      if (has_targets) traces[dump.model_id].push_back(dump);
      auto it = by_keyword.find(dump.subject);
      if (it == by_keyword.end()) continue;
      per_model[dump.model_id].push_back(attribute::attribute_curve(dump, it->second, stop, k, ctx.cfg.pool_size));
    }
  }
  std::vector<attribute::AttributeCurve> means;
  std::vector<json> out;
  for (const auto& [model, curves] : per_model) {
    auto mean = attribute::mean_curve(curves);
    json layers = json::array();
    for (const auto& p : mean.layers) {
      layers.push_back({{"attribute_rate", p.attribute_rate},
                        {"prob_sum", p.prob_sum},
                        {"in_list_prob", p.in_list_prob},
                        {"out_list_prob", p.out_list_prob}});
    }
    out.push_back({{"kind", "attribute_curve"},
                   {"model_id", model},
                   {"keywords", curves.size()},
                   {"normalized", mean.normalized},
                   {"layers", layers}});
    means.push_back(std::move(mean));
  }
  std::map<std::string, attribute::TargetTrace> trace_by_model;
  for (const auto& [model, dumps] : traces) {
    const auto t = attribute::layerwise_target_trace(dumps);
    out.push_back({{"kind", "target_trace"}, {"model_id", model}, {"mean_rank", t.mean_rank}, {"mean_prob", t.mean_prob}});
    trace_by_model.emplace(model, t);
  }
  const auto& base = ctx.cfg.base_model;
  const auto& adapted = ctx.cfg.adapted_model;
  if (!base.empty() && !adapted.empty()) {
    const attribute::AttributeCurve* b = nullptr;
    const attribute::AttributeCurve* a = nullptr;
    for (const auto& m : means) {
      if (m.model_id == base) b = &m;
      if (m.model_id == adapted) a = &m;
    }
    if (b && a) {
      std::vector<double> br, ar, bp, ap;
      for (const auto& p : b->layers) {
        br.push_back(p.attribute_rate);
        bp.push_back(p.prob_sum);
      }
      for (const auto& p : a->layers) {
        ar.push_back(p.attribute_rate);
        ap.push_back(p.prob_sum);
      }
      const auto rate = attribute::percentage_difference(br, ar, attribute::PercentMode::VsTarget);
      const auto prob = attribute::percentage_difference(bp, ap, attribute::PercentMode::VsTarget);
      out.push_back({{"kind", "percentage_difference"},
                     {"mode", "vs_target"},
                     {"base", base},
                     {"target", adapted},
                     {"attribute_rate", optional_series(rate)},
                     {"prob_sum", optional_series(prob)},
                     {"degenerate", rate.degenerate || prob.degenerate}});
    }
    auto tb = trace_by_model.find(base);
    auto ta = trace_by_model.find(adapted);
    if (tb != trace_by_model.end() && ta != trace_by_model.end()) {
      const auto rank = attribute::percentage_difference(tb->second.mean_rank, ta->second.mean_rank,
                                                         attribute::PercentMode::VsBase);
      const auto prob = attribute::percentage_difference(tb->second.mean_prob, ta->second.mean_prob,
                                                         attribute::PercentMode::VsBase);
      out.push_back({{"kind", "percentage_difference"},
                     {"mode", "vs_base"},
                     {"base", base},
                     {"target", adapted},
                     {"target_rank", optional_series(rank)},
                     {"target_prob", optional_series(prob)},
                     {"degenerate", rank.degenerate || prob.degenerate}});
    }
  }
  write_output(ctx, "attribute_layers.jsonl", to_jsonl(out));
  write_output(ctx, "layer_curves.csv", curve_csv(means));
}

void stage_report(Context& ctx) {
  std::vector<std::string> inputs{"sentences.jsonl", "tokenizer.json", "summaries.jsonl", "perplexity.jsonl"};
  for (auto m : methods_of(ctx.cfg)) {
    for (const auto& spec : ctx.cfg.models) inputs.push_back(scores_file(spec.id, m));
  }
  verify_inputs(ctx, "report", inputs);
  const auto summaries = read_jsonl(ctx.file("summaries.jsonl"));
  const auto ppl = read_jsonl(ctx.file("perplexity.jsonl"));
  json rep = json::object();

  std::string bars = report::csv_row({"model_id", "method", "n_pairs", "mean_rank", "mean_rank_ci_lo",
                                      "mean_rank_ci_hi", "median_rank", "median_rank_ci_lo", "median_rank_ci_hi",
                                      "mean_prob", "median_prob", "invalid"});
  std::map<std::string, std::map<std::string, double>> median_by_method;  // method -> model -> median
  for (const auto& s : summaries) {
    const auto model = s.at("model_id").get<std::string>();
    const auto method = s.at("method").get<std::string>();
    median_by_method[method][model] = s.at("median_rank").get<double>();
    auto f = [&](const char* key) { return report::format_double(s.at(key).get<double>()); };
    bars += report::csv_row({model, method, std::to_string(s.at("n_pairs").get<std::size_t>()), f("mean_rank"),
                             report::format_double(s.at("mean_rank_ci")[0].get<double>()),
                             report::format_double(s.at("mean_rank_ci")[1].get<double>()), f("median_rank"),
                             report::format_double(s.at("median_rank_ci")[0].get<double>()),
                             report::format_double(s.at("median_rank_ci")[1].get<double>()), f("mean_prob"),
                             f("median_prob"), s.value("invalid", false) ? "true" : "false"});
  }
  write_output(ctx, "rank_bars.csv", bars);
  rep["summaries"] = summaries;

  std::map<std::string, double> perplexity;
  for (const auto& p : ppl) {
    if (!p.at("perplexity").is_null()) perplexity[p.at("model_id").get<std::string>()] = p.at("perplexity").get<double>();
  }
  rep["perplexity"] = perplexity;

  std::string corr_csv = report::csv_row({"series_a", "series_b", "n", "pearson_r", "p_value"});
  json correlations = json::array();
  auto add_correlation = [&](const std::string& name_a, const std::map<std::string, double>& a,
                             const std::string& name_b, const std::map<std::string, double>& b) {
    std::vector<double> xa;
    std::vector<double> xb;
    for (const auto& [model, v] : a) {
      if (auto it = b.find(model); it != b.end()) {
        xa.push_back(v);
        xb.push_back(it->second);
      }
    }
    try {
      const auto c = report::correlate(xa, xb);
      correlations.push_back({{"a", name_a}, {"b", name_b}, {"n", c.n}, {"r", c.r}, {"p_value", c.p_value}});
      corr_csv += report::csv_row({name_a, name_b, std::to_string(c.n), report::format_double(c.r),
                                   report::format_double(c.p_value)});
    } catch (const DegenerateSeries& e) {
      ctx.warnings.push_back("correlation " + name_a + " vs " + name_b + ": " + e.what());
    }
  };
  const auto methods = methods_of(ctx.cfg);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto mi = wordlist::method_name(methods[i]);
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      const auto mj = wordlist::method_name(methods[j]);
      add_correlation(mi + "_median_rank", median_by_method[mi], mj + "_median_rank", median_by_method[mj]);
    }
    add_correlation(mi + "_median_rank", median_by_method[mi], "perplexity", perplexity);
  }

  if (!ctx.cfg.against.empty()) {
    ctx.stage_entry["inputs"]["against:" + ctx.cfg.against.filename().string()] = sha256_file(ctx.cfg.against);
    const auto sentences = sentences_of(ctx);
    const auto tokenizer = load_tokenizer(ctx);
    const auto models = make_models(ctx, sentences, *tokenizer);
    const auto external = prompts::import_external_pairs(ctx.cfg.against, wordlist::Method::TF);
    std::vector<eval::EncodedPair> encoded;
    for (const auto& p : external) encoded.push_back(eval::encode_pair(p, *tokenizer));
    std::size_t min_limit = models.front()->context_limit();
    for (const auto& m : models) min_limit = std::min(min_limit, m->context_limit());
    const auto filter = eval::filter_by_context(encoded, min_limit);
    std::map<std::string, double> external_median;
    std::string against_csv = report::csv_row({"model_id", "n_pairs", "median_rank", "mean_rank"});
    for (const auto& model : models) {
      const auto result = eval::evaluate(*model, external, encoded, filter.kept, ctx.cfg.threads,
                                         ctx.cfg.max_failure_rate);
      try {
        const auto s = eval::summarize(result.records, model->model_id(), "external");
        external_median[model->model_id()] = s.median_rank;
        against_csv += report::csv_row({model->model_id(), std::to_string(s.n_pairs),
                                        report::format_double(s.median_rank), report::format_double(s.mean_rank)});
      } catch (const InsufficientRecords& e) {
        ctx.warnings.push_back("external/" + model->model_id() + ": " + e.what());
      }
    }
    write_output(ctx, "against.csv", against_csv);
    rep["against"] = {{"file", ctx.cfg.against.filename().string()}, {"pairs", external.size()},
                      {"excluded_by_context", filter.excluded.size()}, {"median_rank", external_median}};
    for (auto m : methods) {
      const auto name = wordlist::method_name(m);
      add_correlation(name + "_median_rank", median_by_method[name], "external_median_rank", external_median);
    }
  }
  rep["correlations"] = correlations;
  write_output(ctx, "correlations.csv", corr_csv);

  if (!ctx.cfg.base_model.empty() && !ctx.cfg.adapted_model.empty()) {
    const auto method = methods.front();
    const auto base = eval::load_records(ctx.file(scores_file(ctx.cfg.base_model, method)));
    const auto adapted = eval::load_records(ctx.file(scores_file(ctx.cfg.adapted_model, method)));
    const auto sentences = sentences_of(ctx);
    auto bundle = make_embedder(ctx, sentences);
    const std::string phrase = ctx.cfg.domain_phrase.empty() ? ctx.cfg.domain : ctx.cfg.domain_phrase;
    try {
      const auto cmp = report::token_level_comparison(base, adapted, phrase, *bundle->embedder);
      std::string csv = report::csv_row({"target", "freq", "delta_prob", "delta_rank", "norm_delta_prob",
                                         "norm_delta_rank", "composite", "weighted", "cosine"});
      for (const auto& r : cmp.rows) {
        csv += report::csv_row({r.target, std::to_string(r.freq), report::format_double(r.delta_prob),
                                report::format_double(r.delta_rank), report::format_double(r.norm_delta_prob),
                                report::format_double(r.norm_delta_rank), report::format_double(r.composite),
                                report::format_double(r.weighted), report::format_double(r.cosine)});
      }
      write_output(ctx, "token_level.csv", csv);
      const auto& g = cmp.top_vs_bottom;
      rep["token_level"] = {{"method", wordlist::method_name(method)},
                            {"base", ctx.cfg.base_model},
                            {"adapted", ctx.cfg.adapted_model},
                            {"tokens", cmp.rows.size()},
                            {"group_size", cmp.group_size},
                            {"top_mean_cosine", g.mean_a},
                            {"bottom_mean_cosine", g.mean_b},
                            {"t", g.t},
                            {"p_value", g.p_value},
                            {"cohens_d", g.cohens_d}};
    } catch (const InsufficientTokens& e) {
      ctx.warnings.push_back(std::string("token-level comparison: ") + e.what());
    }
  }
  write_output(ctx, "report.json", rep.dump(2) + "\n");
}

using StageFn = void (*)(Context&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> table = {
      {"ingest", stage_ingest},   {"keywords", stage_keywords}, {"retrieve", stage_retrieve},
      {"wordlists", stage_wordlists}, {"tokens", stage_tokens}, {"prompts", stage_prompts},
      {"eval", stage_eval},       {"attribute", stage_attribute}, {"report", stage_report}};
  return table;
}

void run_one(const Config& cfg, const std::string& stage) {
  Context ctx{cfg, Resources::load(cfg.data_dir), load_manifest(cfg.work_dir), json::object(), {}};
  auto& m = ctx.manifest;
  m["corpus_hash"] = corpus_hash(cfg);
  m["config_hash"] = config_hash(cfg);
  m["seed"] = cfg.seed;
  m["data_hashes"] = ctx.res.file_hashes;
  m["run_id"] = sha256_hex(m["corpus_hash"].get<std::string>() + m["config_hash"].get<std::string>() +
                           std::to_string(cfg.seed) + m["data_hashes"].dump())
                    .substr(0, 16);
  if (!m.contains("stages")) m["stages"] = json::object();
  begin_stage(ctx);
  stage_table().at(stage)(ctx);
  finish_stage(ctx, stage);
}

}  // namespace

void run_stage(const Config& config, const std::string& stage) {
  fs::create_directories(config.work_dir);
  if (stage == "run") {
    for (const auto& s : kStages) run_one(config, s);
    return;
  }
  if (!stage_table().contains(stage)) throw ConfigInvalid("unknown stage '" + stage + "'");
  run_one(config, stage);
}

}  // namespace domainbench::pipeline
