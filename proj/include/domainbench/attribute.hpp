#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "domainbench/eval.hpp"
#include "domainbench/tokens.hpp"
#include "domainbench/util.hpp"

namespace domainbench::attribute {

inline constexpr int kDumpSchemaVersion = 1;

using TokenProb = std::pair<std::string, double>;

struct Layer {
  std::vector<TokenProb> topk;  // probability descending
  std::optional<std::int64_t> target_rank;
  std::optional<double> target_prob;
};

struct LayerDump {
  std::string model_id;
  std::string tokenizer_id;
  std::string subject;  // keyword, or pair id for target traces
  bool normalized = true;
  std::optional<std::int64_t> position;
  std::vector<Layer> layers;  // index = layer number
};

/// Reads a dump file (one record per layer) and groups records by
/// (model_id, subject). Rejects unknown schema versions, gaps in layer
/// numbering, probabilities outside [0, 1] and unsorted top-k lists.
std::vector<LayerDump> load_dumps(const std::filesystem::path& path);
std::vector<LayerDump> parse_dumps(const std::vector<json>& records);
std::string dumps_to_jsonl(const std::vector<LayerDump>& dumps);

/// Drops stopwords and tokens whose stripped form is shorter than three
/// characters, then keeps the first k survivors. Throws InsufficientTokens
/// when fewer than k survive.
std::vector<TokenProb> clean_topk(const std::vector<TokenProb>& topk, const WordSet& stopwords, std::size_t k = 50);

/// |{stripped tokens of clean} ∩ pool| / k * 100.
double attribute_rate(const std::vector<TokenProb>& clean, const WordSet& pool, std::size_t k);

struct ProbabilityMetrics {
  double prob_sum = 0.0;
  double in_list = 0.0;
  double out_list = 0.0;
};

ProbabilityMetrics probability_metrics(const std::vector<TokenProb>& clean, const WordSet& pool);

struct CurvePoint {
  double attribute_rate = 0.0;
  double prob_sum = 0.0;
  double in_list_prob = 0.0;
  double out_list_prob = 0.0;
};

struct AttributeCurve {
  std::string model_id;
  std::string subject;
  std::size_t k = 50;
  std::size_t pool_size = 1200;
  bool normalized = true;
  std::vector<CurvePoint> layers;
};

/// Per-layer metrics for one dump against its keyword's token list. Throws
/// TokenizerMismatch when the dump and list disagree on tokenizer.
AttributeCurve attribute_curve(const LayerDump& dump, const tokens::TokenList& list, const WordSet& stopwords,
                               std::size_t k = 50, std::size_t pool_size = 1200);

/// Layerwise arithmetic mean; all curves need the same layer count.
AttributeCurve mean_curve(const std::vector<AttributeCurve>& curves);

enum class PercentMode { VsTarget, VsBase };

struct PercentDifference {
  std::vector<std::optional<double>> values;  // null where the denominator is zero
  bool degenerate = false;
};

/// vs_target: (t - b) * 100 / t. vs_base: (t - b) * 100 / b.
PercentDifference percentage_difference(const std::vector<double>& base, const std::vector<double>& target,
                                        PercentMode mode);

/// Final-layer attribute rate from a scorer's /topk on the keyword text.
/// Fetches 3k candidates and doubles until k clean tokens are found or the
/// vocabulary is exhausted.
double last_layer_attribute(const eval::Scorer& scorer, const tokens::Tokenizer& tokenizer, const std::string& keyword,
                            const WordSet& pool, const WordSet& stopwords, std::size_t k = 50);

struct TargetTrace {
  std::vector<double> mean_rank;
  std::vector<double> mean_prob;
};

/// Throws MissingTargetFields when any layer lacks target rank or prob.
TargetTrace layerwise_target_trace(const std::vector<LayerDump>& dumps);

/// Largest absolute difference between the dump's final-layer probabilities
/// and the scorer's, matched by token string.
double final_layer_deviation(const LayerDump& dump, const std::vector<TokenProb>& scorer_topk);

}  // namespace domainbench::attribute
