// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "biased_mock.hpp"
#include "domainbench/attribute.hpp"
#include "domainbench/errors.hpp"
#include "domainbench/eval.hpp"
#include "domainbench/phrases.hpp"
#include "domainbench/pipeline.hpp"
#include "domainbench/prompts.hpp"
#include "domainbench/report.hpp"
#include "domainbench/wordlist.hpp"
#include "fixture_run.hpp"
#include "hand_dumps.hpp"
#include "oracles.hpp"
#include "prompt_fuzz.hpp"
#include "random_corpora.hpp"
#include "temp_dir.hpp"

using namespace domainbench;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

using Check = std::function<void(Outcome&)>;

void determinism(Outcome& out) {
  testsupport::TempDir dir("acceptance");
  std::vector<std::map<std::string, std::string>> runs;
  std::vector<std::string> manifest_hashes;
  double slowest = 0.0;
  for (const char* name : {"first", "second"}) {
    auto cfg = testsupport::fixture_config(dir / name);
    cfg.seed = 7;
    cfg.threads = 1;
    const auto start = std::chrono::steady_clock::now();
    pipeline::run_stage(cfg, "run");
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    slowest = std::max(slowest, took.count());
    runs.push_back(testsupport::snapshot(cfg.work_dir));
    manifest_hashes.push_back(sha256_file(cfg.work_dir / "manifest.json"));
  }
  std::size_t docs = 0;
  std::istringstream meta(read_file(testsupport::fixtures_dir() / "corpus" / "metadata.jsonl"));
  for (std::string line; std::getline(meta, line);) docs += !trim(line).empty();
  out.require(docs == 200, "fixture corpus has " + std::to_string(docs) + " documents");
  out.require(runs[0].size() == runs[1].size(), "artifact sets differ");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) {
      ++differing;
      out.require(false, name + " differs");
    }
  }
  out.require(manifest_hashes[0] == manifest_hashes[1], "manifest hashes differ");
  out.require(slowest < 60.0, "run took " + std::to_string(slowest) + " s");
  out.detail << runs[0].size() << " artifacts, " << differing << " differing, manifest "
             << manifest_hashes[0].substr(0, 12) << ", slowest run " << std::fixed << std::setprecision(2) << slowest
             << " s";
}

void tf_tfidf_oracle(Outcome& out) {
  std::mt19937 rng(50);
  std::size_t cases = 0;
  std::size_t cut_cases = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = testsupport::keyword_docs(rng);
    for (auto method : {wordlist::Method::TF, wordlist::Method::TFIDF}) {
      ++cases;
      const auto o = oracle::vectorize(c.docs, method == wordlist::Method::TFIDF, c.min_df, c.max_df);
      const auto m = wordlist::vectorize(c.docs, method, static_cast<double>(c.min_df.num) / c.min_df.den,
                                         static_cast<double>(c.max_df.num) / c.max_df.den);
      const std::set<std::string> got(m.vocabulary.begin(), m.vocabulary.end());
      const bool cut_ok = got == o.retained;
      cut_cases += cut_ok;
      out.require(cut_ok, "df cut mismatch in corpus " + std::to_string(trial));
      if (!cut_ok) continue;
      for (std::size_t d = 0; d < c.docs.size(); ++d) {
        const auto row = m.row_terms(d);
        out.require(row.size() == o.weights[d].size(), "row size mismatch");
        for (const auto& [term, w] : row) worst = std::max(worst, std::abs(w - o.weights[d].at(term)));
      }
    }
  }
  out.require(worst <= 1e-9, "score error " + std::to_string(worst));
  out.detail << cases << " corpus/method cases, df cuts exact in " << cut_cases << "/" << cases
             << ", max score error " << std::scientific << std::setprecision(2) << worst;
}

std::set<std::string> surfaces(const std::vector<phrases::NGramCandidate>& c) {
  std::set<std::string> out;
  for (const auto& x : c) out.insert(x.surface);
  return out;
}

std::set<std::string> mined_pairs(const testsupport::Sentences& corpus, double threshold) {
  try {
    return surfaces(phrases::mine_phrases(corpus, {5, threshold, 2}));
  } catch (const EmptyCorpus&) {
    return {};
  }
}

void phrase_oracle(Outcome& out) {
  std::mt19937 rng(99);
  std::size_t agree = 0;
  std::size_t total = 0;
  std::size_t subset = 0;
  std::size_t merged = 0;
  const std::vector<double> thresholds{0.5, 1.0, 2.0, 4.0, 10.0};
  for (int trial = 0; trial < 100; ++trial) {
    const auto corpus = testsupport::toy_corpus(rng);
    std::vector<std::set<std::string>> sets;
    for (double t : thresholds) {
      const auto got = mined_pairs(corpus, t);
      const bool ok = got == oracle::merged_pairs(corpus, 5, t);
      ++total;
      agree += ok;
      merged += got.size();
      out.require(ok, "corpus " + std::to_string(trial) + " threshold " + std::to_string(t));
      sets.push_back(got);
    }
    bool nested = true;
    for (std::size_t i = 1; i < sets.size(); ++i) {
      nested = nested && std::includes(sets[i - 1].begin(), sets[i - 1].end(), sets[i].begin(), sets[i].end());
    }
    subset += nested;
    out.require(nested, "subset property fails in corpus " + std::to_string(trial));
  }
  out.detail << agree << "/" << total << " corpus/threshold cases agree (" << merged << " merges), subset property "
             << subset << "/100";
}

void prompt_contract(Outcome& out) {
  std::size_t sentences = 0;
  std::size_t emitted = 0;
  std::size_t violations = 0;
  for (std::uint64_t seed = 1; sentences < 10000; ++seed) {
    const auto c = testsupport::make_prompt_fuzz_case(seed, 200);
    sentences += c.sentences.size();
    const auto tok = tokens::PieceTokenizer::train(c.tokenizer_texts);
    prompts::PairOptions opt;
    opt.n_pairs = 1000;
    const auto pairs = prompts::build_pairs(c.list.keyword, c.matches, c.sentences, c.list, tok, seed, opt);
    std::map<std::pair<std::string, int>, std::string> text;
    for (const auto& s : c.sentences) text[std::pair(s.doc_id, s.sent_index)] = s.text;
    for (const auto& p : pairs) {
      const auto v = oracle::prompt_violations(p, text.at(std::pair(p.doc_id, p.sent_index)), c.list, tok);
      violations += v.size();
      if (!v.empty()) out.require(false, join(v, ",") + " for seed " + std::to_string(seed));
    }
    emitted += pairs.size();
  }
  out.require(emitted > 0, "no pairs emitted");
  out.detail << sentences << " sentences, " << emitted << " pairs, " << violations << " violations";
}

void attribute_exactness(Outcome& out) {
  std::size_t layers = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto h = testsupport::make_hand_dump(seed);
    const auto curve = attribute::attribute_curve(h.dump, h.list, h.stopwords, h.k, h.pool_size);
    for (std::size_t l = 0; l < 3; ++l) {
      const auto& p = curve.layers[l];
      const bool ok = p.attribute_rate == h.rate[l] && p.prob_sum == h.in_list[l] && p.in_list_prob == h.in_list[l] &&
                      p.out_list_prob == h.out_list[l];
      layers += ok;
      out.require(ok, "dump " + std::to_string(seed) + " layer " + std::to_string(l));
    }
  }
  std::vector<attribute::TokenProb> clean;
  WordSet pool;
  for (int i = 0; i < 50; ++i) {
    clean.emplace_back(" tok" + std::to_string(100 + i), 0.01);
    if (i < 35) pool.insert("tok" + std::to_string(100 + i));
  }
  const double rate = attribute::attribute_rate(clean, pool, 50);
  out.require(rate == 70.0, "35/50 overlap gave " + std::to_string(rate));
  out.detail << "20 dumps, " << layers << "/60 layers exact, 35/50 overlap -> " << rate;
}

void evaluation_arithmetic(Outcome& out) {
  // Descending table: id 2 holds rank 3 and id 6 holds rank 7 under every prefix.
  const std::vector<double> table{0.3, 0.2, 0.15, 0.1, 0.08, 0.06, 0.04, 0.03, 0.02, 0.02};
  const eval::FunctionScorer fixed({"table", 64, table.size(), "t"},
                                   [&](std::span<const tokens::TokenId>) { return table; });
  const std::vector<tokens::TokenId> prompt{0, 1, 3};
  const std::vector<tokens::TokenId> target{2, 6};
  const auto rec = eval::score_target(fixed, prompt, target);
  out.require(rec.ranks == std::vector<std::int64_t>{3, 7} && rec.mean_rank == 5.0, "multi-token mean rank");

  const eval::FunctionScorer uniform({"uniform", 1024, 100, "t"}, [](std::span<const tokens::TokenId>) {
    return std::vector<double>(100, 0.01);
  });
  std::vector<tokens::TokenId> stream(1000);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<tokens::TokenId>((i * 37) % 100);
  const double ppl = eval::perplexity(uniform, stream, 64);
  out.require(std::abs(ppl - 100.0) <= 1e-6, "uniform perplexity " + std::to_string(ppl));

  std::vector<double> a, b;
  for (int i = 0; i < 50; ++i) {
    a.push_back(0.5 * i + 3.0);
    b.push_back(-7.25 * a.back() + 2.0);
  }
  const double r = report::correlate(a, b).r;
  std::vector<double> c(b.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 3.0 * a[i] - 1.0;
  const double r_up = report::correlate(a, c).r;
  out.require(std::abs(std::abs(r) - 1.0) <= 1e-12 && std::abs(r_up - 1.0) <= 1e-12, "linear Pearson");
  out.detail << std::setprecision(17) << "ranks {3,7} -> " << rec.mean_rank << ", uniform V=100 perplexity " << ppl
             << ", linear r " << r_up << " / " << r;
}

void qualitative_ordering(Outcome& out) {
  std::size_t held = 0;
  std::vector<double> first;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto o = testsupport::median_ranks_by_bias(seed, {0.0, 0.01, 0.05});
    const bool ok = o.pairs > 0 && o.medians[0] > o.medians[1] && o.medians[1] > o.medians[2];
    held += ok;
    if (seed == 1) first = o.medians;
    out.require(ok, "seed " + std::to_string(seed));
  }
  out.detail << "strictly decreasing median TF rank in " << held << "/100 seeds (seed 1: " << first[0] << " > "
             << first[1] << " > " << first[2] << ")";
}

void percentage_algebra(Outcome& out) {
  using attribute::PercentMode;
  const auto t = attribute::percentage_difference({60}, {80}, PercentMode::VsTarget).values[0];
  const auto b = attribute::percentage_difference({60}, {80}, PercentMode::VsBase).values[0];
  out.require(t && *t == 25.0, "vs_target");
  out.require(b && std::abs(*b - 100.0 / 3.0) <= 1e-9, "vs_base");
  const std::vector<double> curve{12.5, 40, 70, 3.25};
  bool zero = true;
  for (auto mode : {PercentMode::VsTarget, PercentMode::VsBase}) {
    for (const auto& v : attribute::percentage_difference(curve, curve, mode).values) zero = zero && v && *v == 0.0;
  }
  out.require(zero, "identical curves");
  out.detail << std::setprecision(17) << "vs_target(80,60) = " << *t << ", vs_base(80,60) = " << *b
             << ", identical curves all zero: " << (zero ? "yes" : "no");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Check>> checks{
      {"determinism", determinism},
      {"tf-tfidf-oracle", tf_tfidf_oracle},
      {"phrase-miner-oracle", phrase_oracle},
      {"prompt-contract", prompt_contract},
      {"attribute-rate-exactness", attribute_exactness},
      {"evaluation-arithmetic", evaluation_arithmetic},
      {"qualitative-ordering", qualitative_ordering},
      {"percentage-difference-algebra", percentage_algebra},
  };
  int failed = 0;
  for (const auto& [name, check] : checks) {
    Outcome out;
    try {
      check(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    std::cout << (out.pass ? "PASS " : "FAIL ") << name << ": " << out.detail.str() << std::endl;
    failed += !out.pass;
  }
  return failed == 0 ? 0 : 1;
}
