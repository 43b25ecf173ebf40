#include <doctest.h>

#include "domainbench/attribute.hpp"
#include "domainbench/errors.hpp"
#include "hand_dumps.hpp"
#include "temp_dir.hpp"

using namespace domainbench;
using namespace domainbench::attribute;

namespace {

std::vector<TokenProb> tokens_named(const std::string& prefix, int n, double p = 0.01) {
  std::vector<TokenProb> out;
  for (int i = 0; i < n; ++i) out.emplace_back(" " + prefix + std::to_string(100 + i), p);
  return out;
}

json record(int layer, std::string keyword = "kw") {
  return json{{"schema_version", 1}, {"model_id", "m"},  {"tokenizer_id", "t"}, {"keyword", keyword},
              {"layer", layer},      {"normalized", true}, {"topk", json::array({json::array({" graph", 0.5}),
                                                                                   json::array({" tree", 0.25})})}};
}

}  // namespace

TEST_CASE("clean_topk examples") {
  const WordSet stop{"the", "of"};
  auto raw = tokens_named("tok", 48);
  for (int i = 0; i < 12; ++i) raw.insert(raw.begin() + 3 * i, TokenProb{i % 2 ? " the" : " of", 0.01});
  REQUIRE(raw.size() == 60);
  CHECK_THROWS_AS(clean_topk(raw, stop, 50), InsufficientTokens);
  raw.emplace_back(" more", 0.001);
  raw.emplace_back(" words", 0.001);
  const auto clean = clean_topk(raw, stop, 50);
  CHECK(clean.size() == 50);
  CHECK(clean.back().first == " words");

  const auto plain = tokens_named("w", 50);
  CHECK(clean_topk(plain, stop, 50) == plain);
  const std::vector<TokenProb> shorts{{" ab", 0.5}, {"xy", 0.3}, {" abc", 0.1}, {" The", 0.05}};
  CHECK(clean_topk(shorts, stop, 1) == std::vector<TokenProb>{{" abc", 0.1}});
}

TEST_CASE("attribute rate examples") {
  auto clean = tokens_named("in", 35);
  const auto rest = tokens_named("out", 15);
  clean.insert(clean.end(), rest.begin(), rest.end());
  WordSet pool;
  for (int i = 0; i < 35; ++i) pool.insert("in" + std::to_string(100 + i));
  CHECK(attribute_rate(clean, pool, 50) == 70.0);
  CHECK(attribute_rate(rest, pool, 50) == 0.0);
  // Set semantics: the same string twice counts once.
  const std::vector<TokenProb> dup{{" in100", 0.2}, {"in100", 0.1}};
  CHECK(attribute_rate(dup, pool, 2) == 50.0);
  CHECK_THROWS_AS(attribute_rate(dup, pool, 0), InsufficientTokens);
}

TEST_CASE("probability metrics examples") {
  const std::vector<TokenProb> clean{{" aaa", 0.5}, {" bbb", 0.12}};
  const auto all = probability_metrics(clean, {"aaa", "bbb"});
  CHECK(all.prob_sum == 0.62);
  CHECK(all.in_list == 0.62);
  CHECK(all.out_list == 0.0);
  const auto none = probability_metrics(clean, {"zzz"});
  CHECK(none.prob_sum == 0.0);
  CHECK(none.out_list == 0.62);
}

TEST_CASE("hand-built three-layer dumps equal manual computation exactly") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto h = testsupport::make_hand_dump(seed);
    const auto curve = attribute_curve(h.dump, h.list, h.stopwords, h.k, h.pool_size);
    REQUIRE(curve.layers.size() == 3);
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(curve.layers[l].attribute_rate == h.rate[l]);
      CHECK(curve.layers[l].prob_sum == h.in_list[l]);
      CHECK(curve.layers[l].in_list_prob == h.in_list[l]);
      CHECK(curve.layers[l].out_list_prob == h.out_list[l]);
      CHECK(curve.layers[l].in_list_prob + curve.layers[l].out_list_prob <= 1.0 + 1e-6);
    }
  }
}

TEST_CASE("curves need matching tokenizers and layer counts") {
  auto h = testsupport::make_hand_dump(1);
  h.list.tokenizer_id = "other";
  CHECK_THROWS_AS(attribute_curve(h.dump, h.list, h.stopwords), TokenizerMismatch);

  AttributeCurve a{"m", "a", 50, 1200, true, {{10, 0.1, 0.1, 0.2}, {20, 0.2, 0.2, 0.3}}};
  AttributeCurve b{"m", "b", 50, 1200, true, {{30, 0.3, 0.3, 0.4}, {40, 0.4, 0.4, 0.5}}};
  const auto m = mean_curve({a, b});
  CHECK(m.layers[0].attribute_rate == 20.0);
  CHECK(m.layers[1].out_list_prob == doctest::Approx(0.4));
  b.layers.pop_back();
  CHECK_THROWS_AS(mean_curve({a, b}), LayerCountMismatch);
  CHECK_THROWS_AS(mean_curve({}), InsufficientRecords);
}

TEST_CASE("percentage difference algebra") {
  CHECK(percentage_difference({60}, {80}, PercentMode::VsTarget).values[0] == 25.0);
  CHECK(std::abs(*percentage_difference({60}, {80}, PercentMode::VsBase).values[0] - 100.0 / 3.0) <= 1e-9);
  const std::vector<double> c{3, 0.5, 70, 12};
  for (auto mode : {PercentMode::VsTarget, PercentMode::VsBase}) {
    const auto same = percentage_difference(c, c, mode);
    CHECK_FALSE(same.degenerate);
    for (const auto& v : same.values) CHECK(*v == 0.0);
  }
  const auto zero = percentage_difference({0, 5}, {1, 5}, PercentMode::VsBase);
  CHECK(zero.degenerate);
  CHECK_FALSE(zero.values[0].has_value());
  CHECK(*zero.values[1] == 0.0);
  CHECK_THROWS_AS(percentage_difference({1}, {1, 2}, PercentMode::VsTarget), LayerCountMismatch);

  // Swapping base and target turns vs_target into the negated vs_base.
  const std::vector<double> b{60, 1.5, 7, 0.25}, t{80, 0.75, 9, 3};
  const auto fwd = percentage_difference(b, t, PercentMode::VsTarget);
  const auto rev = percentage_difference(t, b, PercentMode::VsBase);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(*fwd.values[i] == -*rev.values[i]);
}

TEST_CASE("layer dump schema") {
  SUBCASE("valid records group by subject") {
    const auto dumps = parse_dumps({record(1), record(0), record(0, "other")});
    REQUIRE(dumps.size() == 2);
    CHECK(dumps[0].subject == "kw");
    CHECK(dumps[0].layers.size() == 2);
    CHECK(dumps[0].layers[0].topk[0] == TokenProb{" graph", 0.5});
  }
  SUBCASE("pair id subjects") {
    auto r = record(0);
    r.erase("keyword");
    r["pair_id"] = 17;
    r["target_rank"] = 3;
    r["target_prob"] = 0.25;
    const auto d = parse_dumps({r});
    CHECK(d[0].subject == "17");
    CHECK(*d[0].layers[0].target_rank == 3);
  }
  SUBCASE("rejections") {
    auto bad_version = record(0);
    bad_version["schema_version"] = 2;
    CHECK_THROWS_AS(parse_dumps({bad_version}), SchemaError);
    CHECK_THROWS_AS(parse_dumps({record(0), record(2)}), SchemaError);
    CHECK_THROWS_AS(parse_dumps({record(1)}), SchemaError);
    CHECK_THROWS_AS(parse_dumps({record(0), record(0)}), SchemaError);
    auto high = record(0);
    high["topk"] = json::array({json::array({" x", 1.5})});
    CHECK_THROWS_AS(parse_dumps({high}), SchemaError);
    auto unsorted = record(0);
    unsorted["topk"] = json::array({json::array({" x", 0.1}), json::array({" y", 0.2})});
    CHECK_THROWS_AS(parse_dumps({unsorted}), SchemaError);
    auto anonymous = record(0);
    anonymous.erase("keyword");
    CHECK_THROWS_AS(parse_dumps({anonymous}), SchemaError);
    auto mixed = record(1);
    mixed["tokenizer_id"] = "u";
    CHECK_THROWS_AS(parse_dumps({record(0), mixed}), SchemaError);
    auto missing = record(0);
    missing.erase("topk");
    CHECK_THROWS_AS(parse_dumps({missing}), SchemaError);
  }
}

TEST_CASE("dump files round trip") {
  testsupport::TempDir dir;
  const auto h = testsupport::make_hand_dump(4);
  write_file(dir / "d.jsonl", dumps_to_jsonl({h.dump}));
  const auto back = load_dumps(dir / "d.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].layers.size() == 3);
  CHECK(back[0].layers[2].topk == h.dump.layers[2].topk);
  CHECK(dumps_to_jsonl(back) == read_file(dir / "d.jsonl"));
}

TEST_CASE("layerwise target trace") {
  LayerDump a{"m", "t", "0", true, {}, {}};
  LayerDump b{"m", "t", "1", true, {}, {}};
  for (int l = 0; l < 3; ++l) {
    a.layers.push_back({{}, 7, 0.125});
    b.layers.push_back({{}, l == 1 ? 4 : 7, 0.25 * (l + 1)});
  }
  const auto single = layerwise_target_trace({a});
  CHECK(single.mean_rank == std::vector<double>{7, 7, 7});
  a.layers[1].target_rank = 2;
  const auto both = layerwise_target_trace({a, b});
  CHECK(both.mean_rank[1] == 3.0);
  CHECK(both.mean_prob[2] == (0.125 + 0.75) / 2);
  a.layers[0].target_prob.reset();
  CHECK_THROWS_AS(layerwise_target_trace({a}), MissingTargetFields);
  CHECK_THROWS_AS(layerwise_target_trace({}), MissingTargetFields);
}

TEST_CASE("planted monotone probabilities come back unchanged") {
  std::vector<LayerDump> dumps;
  for (int p = 0; p < 5; ++p) {
    LayerDump d{"m", "t", std::to_string(p), true, {}, {}};
    for (int l = 0; l < 4; ++l) d.layers.push_back({{}, 10 - 2 * l, 0.125 * (l + 1)});
    dumps.push_back(d);
  }
  const auto trace = layerwise_target_trace(dumps);
  CHECK(trace.mean_prob == std::vector<double>{0.125, 0.25, 0.375, 0.5});
  CHECK(trace.mean_rank == std::vector<double>{10, 8, 6, 4});
}

namespace {

using tokens::TokenId;

/// Token strings "w<id>" except for ids listed in `special`.
struct NamedTokenizer : tokens::Tokenizer {
  std::map<TokenId, std::string> special;
  std::size_t v = 400;
  std::string id() const override { return "named"; }
  std::vector<TokenId> encode(std::string_view) const override { return {1, 2}; }
  std::string decode(std::span<const TokenId> ids) const override {
    std::string s;
    for (auto i : ids) s += token_string(i);
    return s;
  }
  std::string token_string(TokenId i) const override {
    auto it = special.find(i);
    return it != special.end() ? it->second : " w" + std::to_string(i);
  }
  std::size_t vocab_size() const override { return v; }
};

eval::FunctionScorer descending_scorer(std::size_t v) {
  return eval::FunctionScorer({"desc", 64, v, "named"}, [v](std::span<const TokenId>) {
    std::vector<double> p(v);
    double total = 0;
    for (std::size_t i = 0; i < v; ++i) total += p[i] = static_cast<double>(v - i);
    for (auto& x : p) x /= total;
    return p;
  });
}

}  // namespace

TEST_CASE("last-layer attribute rate from a scorer") {
  NamedTokenizer tok;
  const auto scorer = descending_scorer(tok.v);
  WordSet pool;
  // Ids below 10 strip to two characters and are dropped, so clean ranks start at id 10.
  for (int i = 10; i < 60; ++i) pool.insert("w" + std::to_string(i));
  CHECK(last_layer_attribute(scorer, tok, "kw", pool, {}, 50) == 100.0);

  SUBCASE("stopwords fill the first 200 ranks") {
    for (TokenId i = 0; i < 200; ++i) tok.special[i] = " the";
    WordSet later;
    for (int i = 200; i < 225; ++i) later.insert("w" + std::to_string(i));
    // Clean tokens are ranks 200..249; half of them are in the pool.
    CHECK(last_layer_attribute(scorer, tok, "kw", later, {"the"}, 50) == 50.0);
  }
  SUBCASE("uniform scorer ranks by id") {
    const eval::FunctionScorer uniform({"u", 64, tok.v, "named"}, [&](std::span<const TokenId>) {
      return std::vector<double>(tok.v, 1.0 / static_cast<double>(tok.v));
    });
    tok.special[0] = "a";
    tok.special[1] = " of";
    WordSet every_third;
    for (int i = 0; i < 400; i += 3) every_third.insert("w" + std::to_string(i));
    // Clean tokens are ids 10..59; multiples of three among them: 12, 15, ..., 57.
    CHECK(last_layer_attribute(uniform, tok, "kw", every_third, {"of"}, 50) == 16 * 2.0);
  }
  SUBCASE("vocabulary exhausted") {
    for (TokenId i = 0; i < 390; ++i) tok.special[i] = " the";
    CHECK_THROWS_AS(last_layer_attribute(scorer, tok, "kw", pool, {"the"}, 50), InsufficientTokens);
  }
}

TEST_CASE("final-layer deviation against the scorer") {
  LayerDump d{"m", "t", "k", true, {}, {}};
  d.layers.push_back({{{" a", 0.5}}, {}, {}});
  d.layers.push_back({{{" a", 0.40004}, {" b", 0.3}}, {}, {}});
  CHECK(final_layer_deviation(d, {{" a", 0.4}, {" b", 0.3}}) <= 1e-4);
  CHECK(final_layer_deviation(d, {{" a", 0.4}}) == 0.3);
}
