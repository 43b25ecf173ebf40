#include "domainbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "domainbench/errors.hpp"

namespace domainbench::report {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

Correlation correlate(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DegenerateSeries("series lengths differ");
  if (a.size() < 3) throw DegenerateSeries("correlation needs at least three points");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw DegenerateSeries("zero variance series");
  Correlation c;
  c.n = a.size();
  c.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  const double df = static_cast<double>(c.n) - 2.0;
  const double denom = 1.0 - c.r * c.r;
  c.p_value = denom <= 0.0 ? 0.0 : two_sided_p(c.r * std::sqrt(df / denom), df);
  return c;
}

GroupTest two_sample_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw InsufficientRecords("each group needs at least two values");
  GroupTest g;
  g.n_a = a.size();
  g.n_b = b.size();
  g.mean_a = mean_of(a);
  g.mean_b = mean_of(b);
  double ssa = 0.0;
  double ssb = 0.0;
  for (double x : a) ssa += (x - g.mean_a) * (x - g.mean_a);
  for (double x : b) ssb += (x - g.mean_b) * (x - g.mean_b);
  const double df = static_cast<double>(g.n_a + g.n_b) - 2.0;
  const double pooled_var = (ssa + ssb) / df;
  const double sd = std::sqrt(pooled_var);
  const double diff = g.mean_a - g.mean_b;
  if (sd == 0.0) {
    g.cohens_d = 0.0;
    g.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    g.p_value = diff == 0.0 ? 1.0 : 0.0;
    return g;
  }
  g.cohens_d = diff / sd;
  g.t = diff / (sd * std::sqrt(1.0 / static_cast<double>(g.n_a) + 1.0 / static_cast<double>(g.n_b)));
  g.p_value = two_sided_p(g.t, df);
  return g;
}

std::vector<double> min_max_normalize(const std::vector<double>& values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(range == 0.0 ? 0.5 : (v - *lo) / range);
  return out;
}

TokenComparison token_level_comparison(const std::vector<eval::ScoreRecord>& base,
                                       const std::vector<eval::ScoreRecord>& adapted,
                                       const std::string& domain_phrase, retrieval::Embedder& embedder) {
  std::map<std::size_t, const eval::ScoreRecord*> base_by_id;
  for (const auto& r : base) base_by_id[r.pair_id] = &r;

  struct Acc {
    std::size_t freq = 0;
    double base_prob = 0.0;
    double adapted_prob = 0.0;
    double base_rank = 0.0;
    double adapted_rank = 0.0;
  };
  std::map<std::string, Acc> acc;
  std::vector<const eval::ScoreRecord*> shared;
  for (const auto& r : adapted) shared.push_back(&r);
  std::sort(shared.begin(), shared.end(), [](auto* x, auto* y) { return x->pair_id < y->pair_id; });
  for (const auto* r : shared) {
    auto it = base_by_id.find(r->pair_id);
    if (it == base_by_id.end()) continue;
    if (it->second->target != r->target) throw SchemaError("pair " + std::to_string(r->pair_id) + " targets differ");
    auto& a = acc[r->target];
    ++a.freq;
    a.base_prob += it->second->mean_prob;
    a.adapted_prob += r->mean_prob;
    a.base_rank += it->second->mean_rank;
    a.adapted_rank += r->mean_rank;
  }
  if (acc.size() < kMinSharedTokens) {
    throw InsufficientTokens("token-level comparison needs " + std::to_string(kMinSharedTokens) +
                             " shared targets, found " + std::to_string(acc.size()));
  }

  TokenComparison out;
  std::vector<double> dprob;
  std::vector<double> drank;
  std::vector<std::string> targets;
  for (const auto& [target, a] : acc) {
    const auto f = static_cast<double>(a.freq);
    TokenRow row;
    row.target = target;
    row.freq = a.freq;
    row.delta_prob = (a.adapted_prob - a.base_prob) / f;
    row.delta_rank = (a.base_rank - a.adapted_rank) / f;
    dprob.push_back(row.delta_prob);
    drank.push_back(row.delta_rank);
    targets.push_back(trim(target));
    out.rows.push_back(row);
  }
  const auto np = min_max_normalize(dprob);
  const auto nr = min_max_normalize(drank);
  std::vector<std::string> texts{domain_phrase};
  texts.insert(texts.end(), targets.begin(), targets.end());
  const auto vecs = embedder.embed_batch(texts);
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    auto& row = out.rows[i];
    row.norm_delta_prob = np[i];
    row.norm_delta_rank = nr[i];
    row.composite = 0.5 * np[i] + 0.5 * nr[i];
    row.weighted = row.composite * std::log1p(static_cast<double>(row.freq));
    row.cosine = retrieval::dot(vecs[0].values, vecs[i + 1].values);
  }
  std::sort(out.rows.begin(), out.rows.end(), [](const TokenRow& a, const TokenRow& b) {
    if (a.weighted != b.weighted) return a.weighted > b.weighted;
    return a.target < b.target;
  });
  out.group_size = out.rows.size() / 4;
  std::vector<double> top;
  std::vector<double> bottom;
  for (std::size_t i = 0; i < out.group_size; ++i) {
    top.push_back(out.rows[i].cosine);
    bottom.push_back(out.rows[out.rows.size() - 1 - i].cosine);
  }
  out.top_vs_bottom = two_sample_test(top, bottom);
  return out;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(fields[i]);
  }
  return out + "\n";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  // Shortest round-trip representation, same as the JSON artifacts.
  return json(v).dump();
}

}  // namespace domainbench::report
