#include "domainbench/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "domainbench/errors.hpp"

namespace domainbench::corpus {

RawDocument merge_document(const DocumentMeta& meta, std::string_view fulltext) {
  RawDocument doc;
  doc.doc_id = meta.doc_id;
  doc.title = collapse_whitespace(meta.title);
  doc.abstract = collapse_whitespace(meta.abstract);
  doc.body = collapse_whitespace(fulltext);
  if (doc.title.empty() || doc.abstract.empty()) {
    throw MissingMetadata("document '" + meta.doc_id + "' lacks a title or abstract");
  }
  doc.merged_text = doc.title + " : " + doc.abstract;
  if (!doc.body.empty()) doc.merged_text += " " + doc.body;
  return doc;
}

// ---- segmentation --------------------------------------------------------

RuleSegmenter::RuleSegmenter(WordSet abbreviations) : abbreviations_(std::move(abbreviations)) {}

bool RuleSegmenter::is_abbreviation(std::string_view text, std::size_t period) const {
  std::size_t b = period;
  while (b > 0 && !is_space(text[b - 1])) --b;
  std::string_view word = text.substr(b, period - b);
  while (!word.empty() && (word.front() == '(' || word.front() == '[' || word.front() == '"' ||
                           word.front() == '\'')) {
    word.remove_prefix(1);
  }
  return !word.empty() && abbreviations_.contains(to_lower(word));
}

std::vector<std::string> RuleSegmenter::split(std::string_view text) const {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < n && (text[j] == '"' || text[j] == '\'' || text[j] == ')' || text[j] == ']')) ++j;
    if (j >= n || !is_space(text[j])) continue;
    std::size_t k = j;
    while (k < n && is_space(text[k])) ++k;
    if (k >= n || !std::isupper(static_cast<unsigned char>(text[k]))) continue;
    if (c == '.' && is_abbreviation(text, i)) continue;
    auto sentence = trim(text.substr(start, j - start));
    if (!sentence.empty()) out.push_back(std::move(sentence));
    start = k;
    i = k - 1;
  }
  auto tail = trim(text.substr(std::min(start, n)));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

std::vector<RawSentence> segment_sentences(const RawDocument& doc, const Segmenter& segmenter) {
  std::vector<RawSentence> out;
  int index = 0;
  for (auto& s : segmenter.split(doc.merged_text)) {
    out.push_back({doc.doc_id, index++, std::move(s)});
  }
  return out;
}

// ---- LaTeX to text -------------------------------------------------------

namespace {

const std::unordered_set<std::string_view> kWrapMacros = {
    "textit", "textbf", "emph", "texttt", "textrm", "textsf", "textsc", "textup", "textsl",
    "textnormal", "mathrm", "mathbf", "mathit", "mathsf", "mathtt", "mathcal", "mathbb",
    "mathfrak", "mathscr", "boldsymbol", "bm", "text", "mbox", "hbox", "underline", "overline",
    "operatorname", "uline", "url", "section", "subsection", "subsubsection", "paragraph",
    "subparagraph", "chapter", "title", "caption", "footnote", "textsuperscript", "textsubscript",
    "hat", "tilde", "bar", "vec", "dot", "ddot", "widehat", "widetilde"};

const std::unordered_set<std::string_view> kDropMacros = {
    "label", "ref", "eqref", "pageref", "cref", "Cref", "autoref", "includegraphics", "vspace",
    "hspace", "bibliography", "bibliographystyle", "input", "include", "nocite", "bibitem",
    "vskip", "hskip", "setlength", "addtocounter", "setcounter"};

const std::unordered_set<std::string_view> kEnvMarkers = {"begin", "end"};

// Symbols render to their Unicode form, exactly as a general-purpose
// converter would; non-ASCII output is rejected later by validation.
const std::unordered_map<std::string_view, std::string_view> kSymbols = {
    {"alpha", "α"},   {"beta", "β"},     {"gamma", "γ"},   {"delta", "δ"},
    {"epsilon", "ϵ"}, {"varepsilon", "ε"}, {"zeta", "ζ"}, {"eta", "η"},
    {"theta", "θ"},   {"iota", "ι"},     {"kappa", "κ"},   {"lambda", "λ"},
    {"mu", "μ"},      {"nu", "ν"},       {"xi", "ξ"},      {"pi", "π"},
    {"rho", "ρ"},     {"sigma", "σ"},    {"tau", "τ"},     {"phi", "ϕ"},
    {"varphi", "φ"},  {"chi", "χ"},      {"psi", "ψ"},     {"omega", "ω"},
    {"Gamma", "Γ"},   {"Delta", "Δ"},    {"Theta", "Θ"},   {"Lambda", "Λ"},
    {"Sigma", "Σ"},   {"Phi", "Φ"},      {"Psi", "Ψ"},     {"Omega", "Ω"},
    {"le", "≤"},      {"leq", "≤"},      {"ge", "≥"},      {"geq", "≥"},
    {"neq", "≠"},     {"ne", "≠"},       {"in", "∈"},      {"notin", "∉"},
    {"times", "×"},   {"cdot", "⋅"},     {"infty", "∞"},   {"to", "→"},
    {"rightarrow", "→"}, {"leftarrow", "←"}, {"Rightarrow", "⇒"},
    {"sum", "∑"},     {"prod", "∏"},     {"int", "∫"},     {"partial", "∂"},
    {"nabla", "∇"},   {"pm", "±"},       {"approx", "≈"},  {"sim", "∼"},
    {"setminus", "∖"}, {"subset", "⊂"},  {"subseteq", "⊆"}, {"cup", "∪"},
    {"cap", "∩"},     {"forall", "∀"},   {"exists", "∃"},  {"langle", "⟨"},
    {"rangle", "⟩"},  {"emptyset", "∅"}, {"circ", "∘"},    {"ell", "ℓ"},
    {"mid", "|"},          {"quad", " "},          {"qquad", " "},        {"ldots", "..."},
    {"dots", "..."},       {"cdots", "..."},       {"textbackslash", "\\"}, {"LaTeX", "LaTeX"},
    {"TeX", "TeX"},        {"newline", " "},       {"par", " "},          {"noindent", ""},
    {"centering", ""},     {"item", " "},          {"maketitle", ""},
    {"left", ""},          {"right", ""},          {"big", ""},           {"Big", ""},
    {"displaystyle", ""},  {"textasciitilde", "~"}, {"stackrel", ""}};

class LatexParser {
 public:
  explicit LatexParser(std::string_view s) : s_(s) {}

  std::optional<std::string> run() {
    std::string out;
    if (!sequence(out, '\0')) return std::nullopt;
    return out;
  }

 private:
  static bool is_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

  void skip_spaces() {
    while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
  }

  // Skips an optional [..] argument.
  bool skip_optional() {
    std::size_t save = pos_;
    skip_spaces();
    if (pos_ < s_.size() && s_[pos_] == '[') {
      auto close = s_.find(']', pos_);
      if (close == std::string_view::npos) return false;
      pos_ = close + 1;
      return true;
    }
    pos_ = save;
    return true;
  }

  // Parses one argument: a {group} or a single token.
  bool argument(std::string& out) {
    skip_spaces();
    if (pos_ >= s_.size()) return true;
    if (s_[pos_] == '{') {
      ++pos_;
      return sequence(out, '}');
    }
    return element(out);
  }

  bool sequence(std::string& out, char close) {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (close != '\0' && c == close) {
        ++pos_;
        return true;
      }
      if (c == '}') return false;
      if (!element(out)) return false;
    }
    return close == '\0';
  }

  bool math(std::string& out, std::string_view terminator) {
    auto end = s_.find(terminator, pos_);
    if (end == std::string_view::npos) return false;
    LatexParser inner(s_.substr(pos_, end - pos_));
    auto converted = inner.run();
    if (!converted) return false;
    out += *converted;
    pos_ = end + terminator.size();
    return true;
  }

  bool element(std::string& out) {
    const char c = s_[pos_];
    switch (c) {
      case '\\':
        return macro(out);
      case '{':
        ++pos_;
        return sequence(out, '}');
      case '$':
        if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '$') {
          pos_ += 2;
          return math(out, "$$");
        }
        ++pos_;
        return math(out, "$");
      case '~':
        ++pos_;
        out.push_back(' ');
        return true;
      case '`':
        if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '`') {
          pos_ += 2;
          out.push_back('"');
        } else {
          ++pos_;
          out.push_back('\'');
        }
        return true;
      case '\'':
        if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '\'') {
          pos_ += 2;
          out.push_back('"');
        } else {
          ++pos_;
          out.push_back('\'');
        }
        return true;
      default:
        out.push_back(c);
        ++pos_;
        return true;
    }
  }

  bool macro(std::string& out) {
    ++pos_;  // backslash
    if (pos_ >= s_.size()) return false;
    const char c = s_[pos_];
    if (!is_letter(c)) {
      ++pos_;
      switch (c) {
        case '%': case '&': case '$': case '#': case '_': case '{': case '}':
          out.push_back(c);
          return true;
        case '\\': case ' ': case ',': case ';': case ':':
          out.push_back(' ');
          return true;
        case '!': case '/': case '-':
          return true;
        case '(':
          return math(out, "\\)");
        case '[':
          return math(out, "\\]");
        case '\'': case '"': case '`': case '^': case '~': case '=': case '.': {
          // Accents fold to their base letter.
          std::string base;
          if (!argument(base)) return false;
          out += base;
          return true;
        }
        default:
          out.push_back(c);
          return true;
      }
    }
    std::size_t b = pos_;
    while (pos_ < s_.size() && is_letter(s_[pos_])) ++pos_;
    std::string_view name = s_.substr(b, pos_ - b);
    if (pos_ < s_.size() && s_[pos_] == '*') ++pos_;

    if (kEnvMarkers.contains(name)) {
      std::string ignored;
      return argument(ignored);
    }
    if (name == "href") {
      std::string url;
      std::string label;
      if (!argument(url) || !argument(label)) return false;
      out += label;
      return true;
    }
    if (kWrapMacros.contains(name)) {
      if (!skip_optional()) return false;
      return argument(out);
    }
    if (kDropMacros.contains(name)) {
      if (!skip_optional()) return false;
      std::string ignored;
      return argument(ignored);
    }
    if (name == "frac") {
      std::string num;
      std::string den;
      if (!argument(num) || !argument(den)) return false;
      out += num + "/" + den;
      return true;
    }
    if (auto it = kSymbols.find(name); it != kSymbols.end()) {
      out += it->second;
      return true;
    }
    // Unknown macro: the name vanishes, any {group} arguments that follow are
    // rendered as ordinary groups.
    return true;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::optional<std::string> latex_to_text(std::string_view latex) { return LatexParser(latex).run(); }

bool is_allowed_char(unsigned char c) { return (c >= 0x09 && c <= 0x0D) || (c >= 0x20 && c <= 0x7E); }

SentenceCleaner::SentenceCleaner(const std::vector<std::string>& citation_patterns) {
  patterns_.reserve(citation_patterns.size());
  for (const auto& p : citation_patterns) patterns_.emplace_back(p, std::regex::ECMAScript);
}

std::string SentenceCleaner::remove_citations(std::string_view text) const {
  std::string out(text);
  for (const auto& re : patterns_) out = std::regex_replace(out, re, "");
  return out;
}

std::string SentenceCleaner::step(std::string_view text) const {
  std::string uncited = remove_citations(text);
  auto converted = latex_to_text(uncited);
  return collapse_whitespace(converted ? *converted : uncited);
}

std::optional<std::string> SentenceCleaner::clean(std::string_view raw) const {
  std::string current(raw);
  for (int i = 0; i < 64; ++i) {
    std::string next = step(current);
    if (next == current) break;
    current = std::move(next);
  }
  if (current.empty()) return std::nullopt;
  for (unsigned char c : current) {
    if (!is_allowed_char(c)) return std::nullopt;
  }
  return current;
}

// ---- corpus I/O ----------------------------------------------------------

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  std::set<std::string> seen;
  for (const auto& j : read_jsonl(dir / "metadata.jsonl")) {
    DocumentMeta m;
    m.doc_id = j.at("doc_id").get<std::string>();
    m.title = j.value("title", "");
    m.abstract = j.value("abstract", "");
    if (j.contains("categories")) {
      const auto& cats = j.at("categories");
      if (cats.is_array()) {
        m.categories = cats.get<std::vector<std::string>>();
      } else {
        m.categories = split_whitespace(cats.get<std::string>());
      }
    }
    if (!seen.insert(m.doc_id).second) throw SchemaError("duplicate doc_id " + m.doc_id);
    corpus.meta.push_back(std::move(m));
  }
  std::sort(corpus.meta.begin(), corpus.meta.end(),
            [](const DocumentMeta& a, const DocumentMeta& b) { return a.doc_id < b.doc_id; });
  const auto ft = dir / "fulltext.jsonl";
  if (std::filesystem::exists(ft)) {
    for (const auto& j : read_jsonl(ft)) {
      corpus.fulltext[j.at("doc_id").get<std::string>()] = j.value("text", "");
    }
  }
  return corpus;
}

std::vector<CleanSentence> ingest(const Corpus& corpus, const Segmenter& segmenter,
                                  const SentenceCleaner& cleaner, unsigned threads,
                                  IngestStats* stats) {
  struct Slot {
    std::vector<CleanSentence> sentences;
    std::size_t raw = 0;
    std::size_t rejected = 0;
    std::string warning;
  };
  std::vector<Slot> slots(corpus.meta.size());
  parallel_for(corpus.meta.size(), threads, [&](std::size_t i) {
    const auto& meta = corpus.meta[i];
    auto it = corpus.fulltext.find(meta.doc_id);
    std::string_view body = it == corpus.fulltext.end() ? std::string_view{} : it->second;
    RawDocument doc;
    try {
      doc = merge_document(meta, body);
    } catch (const MissingMetadata& e) {
      slots[i].warning = e.what();
      return;
    }
    for (auto& raw : segment_sentences(doc, segmenter)) {
      ++slots[i].raw;
      if (auto text = cleaner.clean(raw.text)) {
        slots[i].sentences.push_back({raw.doc_id, raw.sent_index, std::move(*text)});
      } else {
        ++slots[i].rejected;
      }
    }
  });
  std::vector<CleanSentence> out;
  IngestStats local;
  local.documents = corpus.meta.size();
  for (auto& s : slots) {
    local.raw_sentences += s.raw;
    local.rejected += s.rejected;
    if (!s.warning.empty()) local.warnings.push_back(s.warning);
    for (auto& c : s.sentences) out.push_back(std::move(c));
  }
  if (stats) *stats = std::move(local);
  return out;
}

json to_json(const CleanSentence& s) {
  return json{{"doc_id", s.doc_id}, {"sent_index", s.sent_index}, {"text", s.text}};
}

CleanSentence sentence_from_json(const json& j) {
  return {j.at("doc_id").get<std::string>(), j.at("sent_index").get<int>(),
          j.at("text").get<std::string>()};
}

std::vector<CleanSentence> load_sentences(const std::filesystem::path& path) {
  std::vector<CleanSentence> out;
  for (const auto& j : read_jsonl(path)) out.push_back(sentence_from_json(j));
  return out;
}

}  // namespace domainbench::corpus
