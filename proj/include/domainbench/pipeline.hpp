#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "domainbench/util.hpp"

namespace domainbench::pipeline {

struct ModelSpec {
  std::string id;
  std::string kind = "bigram";  // bigram | uniform | http
  double beta = 0.01;
  double train_fraction = 1.0;
  std::size_t context_limit = 1024;
  std::string url;
};

/// Every tunable of the pipeline. Field names in the JSON file match the
/// member names; unknown keys are rejected. Relative paths resolve against
/// the directory of the config file.
struct Config {
  std::filesystem::path corpus_dir;
  std::filesystem::path work_dir;
  std::filesystem::path data_dir;
  std::uint64_t seed = 7;
  std::string domain;         // category filter; empty keeps every document
  std::string domain_phrase;  // anchor text for token-level comparisons
  unsigned threads = 1;

  std::int64_t min_count = 5;
  double collocation_threshold = 10.0;
  int max_n = 7;
  int keyword_target = 300;
  std::array<double, 4> keyword_proportions{0.50, 0.30, 0.15, 0.05};
  double dedup_threshold = 0.85;

  std::string embedder = "cooccurrence";  // cooccurrence | hashing | http
  std::string embedder_url;
  std::size_t embedding_dim = 128;
  bool embedding_cache = true;
  double sentence_threshold = 0.5;

  double term_threshold = 0.3;
  double min_df = 0.0;
  double max_df_tf = 0.80;
  double max_df_tfidf = 0.50;

  std::string tokenizer = "piece";  // piece | http
  std::string tokenizer_url;
  std::size_t token_capacity = 5000;

  std::vector<std::string> methods{"tf", "tfidf"};
  std::size_t n_pairs = 50;
  std::size_t min_context_tokens = 10;
  std::size_t min_context_chars = 40;
  std::size_t scan_start = 6;

  std::vector<ModelSpec> models;
  double heldout_fraction = 0.10;
  std::size_t perplexity_window = 64;
  double max_failure_rate = 0.01;

  std::size_t attribute_k = 50;
  std::size_t pool_size = 1200;
  std::vector<std::filesystem::path> dumps;

  std::string base_model;
  std::string adapted_model;
  std::filesystem::path against;

  /// Throws ConfigInvalid on unknown keys, wrong types or out-of-range values.
  static Config from_json(const json& j, const std::filesystem::path& base_dir);
  static Config load(const std::filesystem::path& path);
  json to_json() const;
  void validate() const;
};

inline const std::vector<std::string> kStages = {"ingest",    "keywords", "retrieve", "wordlists", "tokens",
                                                 "prompts",   "eval",     "attribute", "report"};

/// Runs one stage (or "run" for all) and updates work_dir/manifest.json.
/// Consumed artifacts are verified against the hashes their producing stage
/// recorded; any mismatch raises StaleArtifact.
void run_stage(const Config& config, const std::string& stage);

json load_manifest(const std::filesystem::path& work_dir);

}  // namespace domainbench::pipeline
