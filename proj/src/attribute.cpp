#include "domainbench/attribute.hpp"

#include <algorithm>
#include <map>

#include "domainbench/errors.hpp"

namespace domainbench::attribute {

std::vector<LayerDump> parse_dumps(const std::vector<json>& records) {
  std::map<std::pair<std::string, std::string>, std::map<std::int64_t, json>> grouped;
  for (const auto& r : records) {
    try {
      const int version = r.at("schema_version").get<int>();
      if (version != kDumpSchemaVersion) {
        throw SchemaError("unsupported layer dump schema_version " + std::to_string(version));
      }
      std::string subject;
      if (r.contains("keyword")) {
        subject = r.at("keyword").get<std::string>();
      } else if (r.contains("pair_id")) {
        const auto& p = r.at("pair_id");
        subject = p.is_string() ? p.get<std::string>() : p.dump();
      } else {
        throw SchemaError("layer dump record has neither keyword nor pair_id");
      }
      const auto layer = r.at("layer").get<std::int64_t>();
      if (!grouped[{r.at("model_id").get<std::string>(), subject}].emplace(layer, r).second) {
        throw SchemaError("duplicate layer " + std::to_string(layer) + " for '" + subject + "'");
      }
    } catch (const json::exception& e) {
      throw SchemaError(std::string("layer dump record: ") + e.what());
    }
  }

  std::vector<LayerDump> out;
  for (const auto& [key, layers] : grouped) {
    LayerDump d;
    d.model_id = key.first;
    d.subject = key.second;
    std::int64_t expected = 0;
    for (const auto& [index, r] : layers) {
      if (index != expected++) throw SchemaError("layers of '" + d.subject + "' are not numbered 0..L-1");
      try {
        const auto tok_id = r.at("tokenizer_id").get<std::string>();
        const bool normalized = r.at("normalized").get<bool>();
        if (index == 0) {
          d.tokenizer_id = tok_id;
          d.normalized = normalized;
          if (r.contains("position") && !r.at("position").is_null()) d.position = r.at("position").get<std::int64_t>();
        } else if (tok_id != d.tokenizer_id || normalized != d.normalized) {
          throw SchemaError("inconsistent tokenizer_id or normalized flag across layers of '" + d.subject + "'");
        }
        Layer l;
        double prev = 2.0;
        for (const auto& e : r.at("topk")) {
          TokenProb tp{e.at(0).get<std::string>(), e.at(1).get<double>()};
          if (!(tp.second >= 0.0 && tp.second <= 1.0)) throw SchemaError("probability outside [0, 1]");
          if (tp.second > prev) throw SchemaError("topk not sorted by probability");
          prev = tp.second;
          l.topk.push_back(std::move(tp));
        }
        if (r.contains("target_rank") && !r.at("target_rank").is_null()) {
          l.target_rank = r.at("target_rank").get<std::int64_t>();
        }
        if (r.contains("target_prob") && !r.at("target_prob").is_null()) {
          l.target_prob = r.at("target_prob").get<double>();
        }
        d.layers.push_back(std::move(l));
      } catch (const json::exception& e) {
        throw SchemaError(std::string("layer dump record: ") + e.what());
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<LayerDump> load_dumps(const std::filesystem::path& path) { return parse_dumps(read_jsonl(path)); }

std::string dumps_to_jsonl(const std::vector<LayerDump>& dumps) {
  std::string out;
  for (const auto& d : dumps) {
    for (std::size_t i = 0; i < d.layers.size(); ++i) {
      const auto& l = d.layers[i];
      json topk = json::array();
      for (const auto& [t, p] : l.topk) topk.push_back(json::array({t, p}));
      json r{{"schema_version", kDumpSchemaVersion},
             {"model_id", d.model_id},
             {"tokenizer_id", d.tokenizer_id},
             {"keyword", d.subject},
             {"layer", i},
             {"topk", topk},
             {"normalized", d.normalized}};
      if (d.position) r["position"] = *d.position;
      if (l.target_rank) r["target_rank"] = *l.target_rank;
      if (l.target_prob) r["target_prob"] = *l.target_prob;
      out += r.dump();
      out += '\n';
    }
  }
  return out;
}

std::vector<TokenProb> clean_topk(const std::vector<TokenProb>& topk, const WordSet& stopwords, std::size_t k) {
  std::vector<TokenProb> out;
  for (const auto& tp : topk) {
    if (out.size() == k) break;
    const auto core = trim_view(tp.first);
    if (core.size() < 3 || stopwords.contains(to_lower(core))) continue;
    out.push_back(tp);
  }
  if (out.size() < k) {
    throw InsufficientTokens("only " + std::to_string(out.size()) + " clean tokens among " +
                             std::to_string(topk.size()) + ", need " + std::to_string(k));
  }
  return out;
}

double attribute_rate(const std::vector<TokenProb>& clean, const WordSet& pool, std::size_t k) {
  if (k == 0) throw InsufficientTokens("attribute rate with k = 0");
  WordSet seen;
  for (const auto& [t, p] : clean) {
    std::string core = trim(t);
    if (pool.contains(core)) seen.insert(std::move(core));
  }
  return static_cast<double>(seen.size()) * 100.0 / static_cast<double>(k);
}

ProbabilityMetrics probability_metrics(const std::vector<TokenProb>& clean, const WordSet& pool) {
  ProbabilityMetrics m;
  for (const auto& [t, p] : clean) {
    (pool.contains(trim_view(t)) ? m.in_list : m.out_list) += p;
  }
  m.prob_sum = m.in_list;
  return m;
}

AttributeCurve attribute_curve(const LayerDump& dump, const tokens::TokenList& list, const WordSet& stopwords,
                               std::size_t k, std::size_t pool_size) {
  if (dump.tokenizer_id != list.tokenizer_id) {
    throw TokenizerMismatch("dump for '" + dump.subject + "' uses " + dump.tokenizer_id + ", token list uses " +
                            list.tokenizer_id);
  }
  const WordSet pool = list.pool(pool_size);
  AttributeCurve c{dump.model_id, dump.subject, k, pool_size, dump.normalized, {}};
  for (const auto& layer : dump.layers) {
    const auto clean = clean_topk(layer.topk, stopwords, k);
    const auto m = probability_metrics(clean, pool);
    c.layers.push_back({attribute_rate(clean, pool, k), m.prob_sum, m.in_list, m.out_list});
  }
  return c;
}

AttributeCurve mean_curve(const std::vector<AttributeCurve>& curves) {
  if (curves.empty()) throw InsufficientRecords("mean of zero curves");
  AttributeCurve out = curves.front();
  out.subject = "mean";
  const std::size_t layers = out.layers.size();
  for (const auto& c : curves) {
    if (c.layers.size() != layers) throw LayerCountMismatch("curves differ in layer count");
  }
  const auto n = static_cast<double>(curves.size());
  for (std::size_t l = 0; l < layers; ++l) {
    CurvePoint sum;
    for (const auto& c : curves) {
      sum.attribute_rate += c.layers[l].attribute_rate;
      sum.prob_sum += c.layers[l].prob_sum;
      sum.in_list_prob += c.layers[l].in_list_prob;
      sum.out_list_prob += c.layers[l].out_list_prob;
    }
    out.layers[l] = {sum.attribute_rate / n, sum.prob_sum / n, sum.in_list_prob / n, sum.out_list_prob / n};
  }
  return out;
}

PercentDifference percentage_difference(const std::vector<double>& base, const std::vector<double>& target,
                                        PercentMode mode) {
  if (base.size() != target.size()) {
    throw LayerCountMismatch("base has " + std::to_string(base.size()) + " layers, target has " +
                             std::to_string(target.size()));
  }
  PercentDifference out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double t = target[i];
    const double b = base[i];
    const double denom = mode == PercentMode::VsTarget ? t : b;
    if (denom == 0.0) {
      out.values.emplace_back(std::nullopt);
      out.degenerate = true;
    } else {
      out.values.emplace_back((t - b) * 100.0 / denom);
    }
  }
  return out;
}

double last_layer_attribute(const eval::Scorer& scorer, const tokens::Tokenizer& tokenizer, const std::string& keyword,
                            const WordSet& pool, const WordSet& stopwords, std::size_t k) {
  const auto prefix = tokenizer.encode(keyword);
  const std::size_t vocab = scorer.vocab_size();
  std::size_t fetch = std::min(vocab, 3 * k);
  while (true) {
    const auto top = scorer.topk(prefix, fetch);
    std::vector<TokenProb> raw;
    raw.reserve(top.ids.size());
    for (std::size_t i = 0; i < top.ids.size(); ++i) raw.emplace_back(tokenizer.token_string(top.ids[i]), top.probs[i]);
    try {
      return attribute_rate(clean_topk(raw, stopwords, k), pool, k);
    } catch (const InsufficientTokens&) {
      if (fetch >= vocab) throw;
      fetch = std::min(vocab, fetch * 2);
    }
  }
}

TargetTrace layerwise_target_trace(const std::vector<LayerDump>& dumps) {
  if (dumps.empty()) throw MissingTargetFields("no dumps with target fields");
  const std::size_t layers = dumps.front().layers.size();
  TargetTrace t{std::vector<double>(layers, 0.0), std::vector<double>(layers, 0.0)};
  for (const auto& d : dumps) {
    if (d.layers.size() != layers) throw LayerCountMismatch("dumps differ in layer count");
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& layer = d.layers[l];
      if (!layer.target_rank || !layer.target_prob) {
        throw MissingTargetFields("dump '" + d.subject + "' layer " + std::to_string(l) + " lacks target fields");
      }
      t.mean_rank[l] += static_cast<double>(*layer.target_rank);
      t.mean_prob[l] += *layer.target_prob;
    }
  }
  const auto n = static_cast<double>(dumps.size());
  for (std::size_t l = 0; l < layers; ++l) {
    t.mean_rank[l] /= n;
    t.mean_prob[l] /= n;
  }
  return t;
}

double final_layer_deviation(const LayerDump& dump, const std::vector<TokenProb>& scorer_topk) {
  if (dump.layers.empty()) throw SchemaError("dump without layers");
  std::map<std::string, double> reference(scorer_topk.begin(), scorer_topk.end());
  double worst = 0.0;
  for (const auto& [t, p] : dump.layers.back().topk) {
    auto it = reference.find(t);
    worst = std::max(worst, it == reference.end() ? p : std::abs(it->second - p));
  }
  return worst;
}

}  // namespace domainbench::attribute
