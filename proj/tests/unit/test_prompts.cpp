#include <doctest.h>

#include "domainbench/errors.hpp"
#include "domainbench/prompts.hpp"
#include "oracles.hpp"
#include "prompt_fuzz.hpp"
#include "temp_dir.hpp"

using namespace domainbench;
using namespace domainbench::prompts;
using wordlist::Method;
using wordlist::WordList;
using tokens::PieceTokenizer;

namespace {

WordList list_of(std::vector<std::string> terms, Method m = Method::TF) {
  WordList l{"kw", m, {}};
  for (auto& t : terms) l.terms.push_back({std::move(t), 1.0, 1.0});
  return l;
}

// Ten single-token words totalling 49 characters.
const std::string kTen = "aaaa abab acac adad aeae afaf agag ahah aiai ajaj";

}  // namespace

TEST_CASE("scan_matches takes the longest term ending on a word boundary") {
  const std::vector<std::string> toks = {"x", " deep", " learn", "ing", " deep", " learner", "s"};
  const auto list = list_of({" deep", " deep learning", " learn", " learner"});
  const auto m = scan_matches(toks, list, 0);
  REQUIRE(m.size() == 2);
  CHECK(m[0] == MatchSpan{1, 4, " deep learning"});
  CHECK(m[1] == MatchSpan{4, 5, " deep"});
}

TEST_CASE("find_matches examples") {
  const std::string sentence = kTen + " longwordx dd ee";
  const auto tok = PieceTokenizer::train({sentence});
  const auto ids = tok.encode(sentence);
  REQUIRE(ids.size() == 14);
  REQUIRE(tok.token_string(ids[10]) == " longw");

  SUBCASE("a match ending right before another removes the later one") {
    const auto all = scan_matches({}, list_of({}), 0);
    CHECK(all.empty());
    const auto m = find_matches(ids, list_of({" longwordx", " dd"}), tok);
    REQUIRE(m.size() == 1);
    CHECK(m[0] == MatchSpan{10, 12, " longwordx"});
  }
  SUBCASE("a term before the minimum context is recorded but not kept") {
    std::vector<std::string> strings;
    for (auto id : ids) strings.push_back(tok.token_string(id));
    const auto list = list_of({" aiai"});
    CHECK(scan_matches(strings, list, 6) == std::vector<MatchSpan>{{8, 9, " aiai"}});
    CHECK(find_matches(ids, list, tok).empty());
  }
  SUBCASE("a recorded match before the context floor still blocks") {
    const auto m = find_matches(ids, list_of({" ajaj", " longwordx"}), tok);
    CHECK(m.empty());
  }
  SUBCASE("nothing after the floor") { CHECK(find_matches(ids, list_of({" abab", " zz"}), tok).empty()); }
}

TEST_CASE("the backpropagation example") {
  const std::string s = "Neural networks are usually trained using some variation of backpropagation";
  const auto tok = PieceTokenizer::train({s});
  const auto list = list_of({" backpropagation"});
  const auto pairs = build_pairs("neural network", {{"d", 0, 0.8}}, {{"d", 0, s}}, list, tok, 7);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].prompt == "Neural networks are usually trained using some variation of");
  CHECK(pairs[0].target == " backpropagation");
  CHECK(pairs[0].seed_path == "7/tf/neural network/d/0");
  CHECK(oracle::prompt_violations(pairs[0], s, list, tok).empty());
}

TEST_CASE("keyed choice") {
  CHECK(keyed_choice("any/path", 1) == 0);
  CHECK_THROWS(keyed_choice("x", 0));
  CHECK(keyed_choice("7/tf/k/d/0", 5) == keyed_choice("7/tf/k/d/0", 5));
  std::vector<int> hist(4, 0);
  for (int i = 0; i < 4000; ++i) ++hist[keyed_choice("p" + std::to_string(i), 4)];
  for (int h : hist) CHECK(h > 850);
  CHECK(seed_path(3, Method::TFIDF, "k w", "d", 2) == "3/tfidf/k w/d/2");
}

TEST_CASE("build_pairs rules") {
  const std::string s1 = kTen + " bb cc dd ee ff";
  const std::string s2 = "short a b c d e f g h i j bb";
  const std::vector<corpus::CleanSentence> sents = {{"d1", 0, s1}, {"d1", 1, s2}, {"d2", 0, s1}};
  const auto tok = PieceTokenizer::train({s1, s2});
  const auto list = list_of({" bb", " dd", " ff"});

  SUBCASE("character floor and consumed sentences") {
    PairStats stats;
    const auto pairs =
        build_pairs("kw", {{"d2", 0, 0.9}, {"d1", 1, 0.8}, {"d1", 0, 0.7}, {"d2", 0, 0.6}}, sents, list, tok, 1, {},
                    &stats);
    CHECK(pairs.size() == 2);
    CHECK(stats.sentences_scanned == 3);
    CHECK(stats.rejected_char_floor == 1);
    CHECK(stats.underfull);
    CHECK(pairs[0].doc_id == "d1");
    CHECK(pairs[1].doc_id == "d2");
    for (const auto& p : pairs) CHECK(oracle::prompt_violations(p, s1, list, tok).empty());
  }
  SUBCASE("n_pairs stops early") {
    PairOptions opt;
    opt.n_pairs = 1;
    const auto pairs = build_pairs("kw", {{"d2", 0, 0.9}, {"d1", 0, 0.7}}, sents, list, tok, 1, opt);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].doc_id == "d2");
  }
  SUBCASE("seed changes only the choice among valid matches") {
    std::set<std::string> targets;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto pairs = build_pairs("kw", {{"d1", 0, 0.9}}, sents, list, tok, seed);
      REQUIRE(pairs.size() == 1);
      CHECK(oracle::prompt_violations(pairs[0], s1, list, tok).empty());
      targets.insert(pairs[0].target);
    }
    CHECK(targets == std::set<std::string>{" bb", " dd", " ff"});
  }
}

TEST_CASE("fuzz: every emitted pair satisfies the invariants") {
  std::size_t emitted = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = testsupport::make_prompt_fuzz_case(seed, 100);
    const auto tok = PieceTokenizer::train(c.tokenizer_texts);
    PairOptions opt;
    opt.n_pairs = 1000;
    const auto pairs = build_pairs(c.list.keyword, c.matches, c.sentences, c.list, tok, seed, opt);
    std::map<std::pair<std::string, int>, std::string> text;
    for (const auto& s : c.sentences) text[std::pair(s.doc_id, s.sent_index)] = s.text;
    for (const auto& p : pairs) {
      const auto v = oracle::prompt_violations(p, text.at(std::pair(p.doc_id, p.sent_index)), c.list, tok);
      CHECK_MESSAGE(v.empty(), join(v, ",") << " in: " << text.at(std::pair(p.doc_id, p.sent_index)));
    }
    emitted += pairs.size();
  }
  CHECK(emitted > 200);
}

TEST_CASE("pairs are deterministic and round trip through files") {
  const auto c = testsupport::make_prompt_fuzz_case(99, 60);
  const auto tok = PieceTokenizer::train(c.tokenizer_texts);
  const auto a = build_pairs("k", c.matches, c.sentences, c.list, tok, 7);
  const auto b = build_pairs("k", c.matches, c.sentences, c.list, tok, 7);
  CHECK(pairs_to_jsonl(a) == pairs_to_jsonl(b));
  testsupport::TempDir dir;
  write_file(dir / "p.jsonl", pairs_to_jsonl(a));
  CHECK(load_pairs(dir / "p.jsonl") == a);
}

TEST_CASE("external pairs import") {
  testsupport::TempDir dir;
  write_file(dir / "ext.jsonl",
             "{\"keyword\":\"k\",\"prompt\":\"Some prompt\",\"target\":\" word\"}\n"
             "{\"keyword\":\"j\",\"prompt\":\"Other prompt\",\"target\":\" term\",\"doc_id\":\"x\"}\n");
  const auto pairs = import_external_pairs(dir / "ext.jsonl", Method::TFIDF);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[1].doc_id == "external");
  CHECK(pairs[1].sent_index == 1);
  CHECK(pairs[0].method == Method::TFIDF);
  CHECK(pairs[0].match_start == -1);
  write_file(dir / "bad.jsonl", "{\"keyword\":\"k\",\"prompt\":\"p\"}\n");
  CHECK_THROWS_AS(import_external_pairs(dir / "bad.jsonl", Method::TF), SchemaError);
  write_file(dir / "empty.jsonl", "{\"keyword\":\"k\",\"prompt\":\"\",\"target\":\" t\"}\n");
  CHECK_THROWS_AS(load_pairs(dir / "empty.jsonl"), SchemaError);
}
