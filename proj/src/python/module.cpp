#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "domainbench/attribute.hpp"
#include "domainbench/corpus.hpp"
#include "domainbench/errors.hpp"
#include "domainbench/eval.hpp"
#include "domainbench/phrases.hpp"
#include "domainbench/pipeline.hpp"
#include "domainbench/prompts.hpp"
#include "domainbench/report.hpp"
#include "domainbench/tokens.hpp"
#include "domainbench/wordlist.hpp"

namespace py = pybind11;
using namespace domainbench;

namespace {

py::dict pair_to_dict(const prompts::PromptTarget& p) {
  py::dict d;
  d["keyword"] = p.keyword;
  d["method"] = wordlist::method_name(p.method);
  d["prompt"] = p.prompt;
  d["target"] = p.target;
  d["doc_id"] = p.doc_id;
  d["sent_index"] = p.sent_index;
  d["match_start"] = p.match_start;
  d["seed_path"] = p.seed_path;
  return d;
}

// JSON crosses the boundary as text; the Python package parses it.
std::string run_pipeline(const std::filesystem::path& config_path, const std::string& stage,
                         std::optional<std::filesystem::path> work_dir, std::optional<std::uint64_t> seed) {
  auto cfg = pipeline::Config::load(config_path);
  if (work_dir) cfg.work_dir = *work_dir;
  if (seed) cfg.seed = *seed;
  cfg.validate();
  {
    py::gil_scoped_release release;
    pipeline::run_stage(cfg, stage);
  }
  return pipeline::load_manifest(cfg.work_dir).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the domainbench toolkit";

  auto base = py::register_exception<Error>(m, "DomainbenchError", PyExc_RuntimeError);
#define DB_EXC(Name) py::register_exception<Name>(m, #Name, base.ptr())
  DB_EXC(MissingMetadata);
  DB_EXC(EmptyCorpus);
  DB_EXC(EmbeddingUnavailable);
  DB_EXC(DimensionMismatch);
  DB_EXC(EmptyDocumentSet);
  DB_EXC(EmptyWordList);
  DB_EXC(NoSentences);
  DB_EXC(TokenizerMismatch);
  DB_EXC(ContextOverflow);
  DB_EXC(ScorerUnavailable);
  DB_EXC(InsufficientRecords);
  DB_EXC(InsufficientTokens);
  DB_EXC(LayerCountMismatch);
  DB_EXC(MissingTargetFields);
  DB_EXC(DegenerateSeries);
  DB_EXC(SchemaError);
  DB_EXC(StaleArtifact);
  DB_EXC(ConfigInvalid);
#undef DB_EXC

  m.attr("STAGES") = pipeline::kStages;

  m.def("latex_to_text", &corpus::latex_to_text, py::arg("latex"));

  m.def("tokenize_for_mining", &phrases::tokenize_for_mining, py::arg("sentence"));
  m.def("collocation_score", &phrases::collocation_score, py::arg("count_ab"), py::arg("count_a"), py::arg("count_b"),
        py::arg("vocab_size"), py::arg("min_count") = 5);
  m.def(
      "mine_phrases",
      [](const std::vector<std::vector<std::string>>& sentences, std::int64_t min_count, double threshold, int max_n) {
        py::list out;
        for (const auto& c : phrases::mine_phrases(sentences, {min_count, threshold, max_n})) {
          py::dict d;
          d["surface"] = c.surface;
          d["n"] = c.n;
          d["count"] = c.count;
          d["score"] = c.score;
          out.append(d);
        }
        return out;
      },
      py::arg("sentences"), py::arg("min_count") = 5, py::arg("threshold") = 10.0, py::arg("max_n") = 7);
  m.def("largest_remainder", &phrases::largest_remainder, py::arg("weights"), py::arg("total"));

  m.def("extract_terms", &wordlist::extract_terms, py::arg("text"));
  m.def(
      "vectorize",
      [](const std::vector<std::string>& docs, const std::string& method, double min_df, double max_df) {
        const auto w = wordlist::vectorize(docs, wordlist::parse_method(method), min_df, max_df);
        py::dict d;
        d["vocabulary"] = w.vocabulary;
        d["df"] = w.df;
        d["idf"] = w.idf;
        py::list rows;
        for (std::size_t i = 0; i < w.n_docs; ++i) rows.append(py::dict(py::cast(w.row_terms(i))));
        d["rows"] = rows;
        return d;
      },
      py::arg("docs"), py::arg("method") = "tf", py::arg("min_df") = 0.0, py::arg("max_df") = 1.0);

  py::class_<tokens::PieceTokenizer>(m, "PieceTokenizer")
      .def(py::init<std::vector<std::string>>(), py::arg("pieces"))
      .def_static("train", &tokens::PieceTokenizer::train, py::arg("texts"))
      .def_static("load", &tokens::PieceTokenizer::load, py::arg("path"))
      .def("save", &tokens::PieceTokenizer::save, py::arg("path"))
      .def_property_readonly("id", &tokens::PieceTokenizer::id)
      .def_property_readonly("vocab_size", &tokens::PieceTokenizer::vocab_size)
      .def("encode", &tokens::PieceTokenizer::encode, py::arg("text"))
      .def(
          "decode",
          [](const tokens::PieceTokenizer& t, const std::vector<tokens::TokenId>& ids) { return t.decode(ids); },
          py::arg("ids"))
      .def("token_string", &tokens::PieceTokenizer::token_string, py::arg("id"));

  m.def(
      "build_pairs",
      [](const std::string& keyword, const std::vector<std::tuple<std::string, int, double>>& matches,
         const std::vector<std::tuple<std::string, int, std::string>>& sentences,
         const std::vector<std::string>& terms, const tokens::PieceTokenizer& tokenizer, std::uint64_t seed,
         const std::string& method, std::size_t n_pairs) {
        std::vector<retrieval::SentenceMatch> ms;
        for (const auto& [doc, idx, sim] : matches) ms.push_back({doc, idx, sim});
        std::vector<corpus::CleanSentence> ss;
        for (const auto& [doc, idx, text] : sentences) ss.push_back({doc, idx, text});
        wordlist::WordList list{keyword, wordlist::parse_method(method), {}};
        for (const auto& t : terms) list.terms.push_back({t, 1.0, 1.0});
        prompts::PairOptions opt;
        opt.n_pairs = n_pairs;
        py::list out;
        for (const auto& p : prompts::build_pairs(keyword, ms, ss, list, tokenizer, seed, opt)) {
          out.append(pair_to_dict(p));
        }
        return out;
      },
      py::arg("keyword"), py::arg("matches"), py::arg("sentences"), py::arg("terms"), py::arg("tokenizer"),
      py::arg("seed"), py::arg("method") = "tf", py::arg("n_pairs") = 50);

  m.def("tie_rank", [](const std::vector<double>& probs, tokens::TokenId id) { return eval::tie_rank(probs, id); },
        py::arg("probs"), py::arg("id"));
  m.def("lower_median", &eval::lower_median, py::arg("values"));
  m.def("median_ci_indices", &eval::median_ci_indices, py::arg("n"));

  m.def("clean_topk", &attribute::clean_topk, py::arg("topk"), py::arg("stopwords"), py::arg("k") = 50);
  m.def("attribute_rate", &attribute::attribute_rate, py::arg("clean"), py::arg("pool"), py::arg("k"));
  m.def(
      "probability_metrics",
      [](const std::vector<attribute::TokenProb>& clean, const WordSet& pool) {
        const auto p = attribute::probability_metrics(clean, pool);
        return std::make_tuple(p.prob_sum, p.in_list, p.out_list);
      },
      py::arg("clean"), py::arg("pool"));
  m.def(
      "percentage_difference",
      [](const std::vector<double>& base, const std::vector<double>& target, const std::string& mode) {
        if (mode != "vs_target" && mode != "vs_base") throw ConfigInvalid("mode must be vs_target or vs_base");
        return attribute::percentage_difference(
                   base, target, mode == "vs_target" ? attribute::PercentMode::VsTarget : attribute::PercentMode::VsBase)
            .values;
      },
      py::arg("base"), py::arg("target"), py::arg("mode") = "vs_target");

  m.def(
      "correlate",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto c = report::correlate(a, b);
        return std::make_tuple(c.r, c.p_value);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "two_sample_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto g = report::two_sample_test(a, b);
        py::dict d;
        d["t"] = g.t;
        d["p_value"] = g.p_value;
        d["cohens_d"] = g.cohens_d;
        d["mean_a"] = g.mean_a;
        d["mean_b"] = g.mean_b;
        return d;
      },
      py::arg("a"), py::arg("b"));

  m.def("_run_stage", &run_pipeline, py::arg("config"), py::arg("stage"), py::arg("work_dir") = py::none(),
        py::arg("seed") = py::none());
  m.def(
      "_load_manifest", [](const std::filesystem::path& work_dir) { return pipeline::load_manifest(work_dir).dump(); },
      py::arg("work_dir"));
}
