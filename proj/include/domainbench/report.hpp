#pragma once

#include <string>
#include <vector>

#include "domainbench/embedding.hpp"
#include "domainbench/eval.hpp"

namespace domainbench::report {

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Pearson r with a two-sided p-value from Student's t on n - 2 degrees of
/// freedom. Needs n >= 3 and nonzero variance in both series.
Correlation correlate(const std::vector<double>& a, const std::vector<double>& b);

struct GroupTest {
  double t = 0.0;
  double p_value = 1.0;
  double cohens_d = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

/// Pooled-variance two-sample t-test and Cohen's d with the pooled sd.
GroupTest two_sample_test(const std::vector<double>& a, const std::vector<double>& b);

/// Maps to [0, 1]; a constant series maps to 0.5 everywhere.
std::vector<double> min_max_normalize(const std::vector<double>& values);

struct TokenRow {
  std::string target;
  std::size_t freq = 0;
  double delta_prob = 0.0;
  double delta_rank = 0.0;
  double norm_delta_prob = 0.0;
  double norm_delta_rank = 0.0;
  double composite = 0.0;
  double weighted = 0.0;
  double cosine = 0.0;
};

struct TokenComparison {
  std::vector<TokenRow> rows;  // weighted desc, then target
  GroupTest top_vs_bottom;     // cosine of top quarter vs bottom quarter
  std::size_t group_size = 0;
};

inline constexpr std::size_t kMinSharedTokens = 40;

/// Groups records by target string over pair ids present in both runs. freq
/// is the number of shared pairs with that target; per-target deltas use the
/// mean of those pairs' mean_prob and mean_rank. Throws InsufficientTokens
/// with fewer than 40 distinct shared targets.
TokenComparison token_level_comparison(const std::vector<eval::ScoreRecord>& base,
                                       const std::vector<eval::ScoreRecord>& adapted,
                                       const std::string& domain_phrase, retrieval::Embedder& embedder);

/// Minimal CSV writer: fields containing comma, quote or newline are quoted.
std::string csv_escape(const std::string& field);
std::string csv_row(const std::vector<std::string>& fields);
std::string format_double(double v);

}  // namespace domainbench::report
