#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "domainbench/util.hpp"

namespace domainbench::corpus {

struct DocumentMeta {
  std::string doc_id;
  std::string title;
  std::string abstract;
  std::vector<std::string> categories;
};

struct RawDocument {
  std::string doc_id;
  std::string title;
  std::string abstract;
  std::string body;
  /// title + " : " + abstract + " " + body, whitespace-collapsed.
  std::string merged_text;
};

struct RawSentence {
  std::string doc_id;
  int sent_index = 0;
  std::string text;
};

struct CleanSentence {
  std::string doc_id;
  int sent_index = 0;
  std::string text;

  friend bool operator==(const CleanSentence&, const CleanSentence&) = default;
};

/// Throws MissingMetadata when the title or abstract is empty.
RawDocument merge_document(const DocumentMeta& meta, std::string_view fulltext);

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string id() const = 0;
  virtual std::vector<std::string> split(std::string_view text) const = 0;
};

/// Splits after '.', '!' or '?' (plus any closing quotes/brackets) when the
/// next non-space character is an upper-case ASCII letter. A period that ends
/// a listed abbreviation never splits.
class RuleSegmenter final : public Segmenter {
 public:
  explicit RuleSegmenter(WordSet abbreviations);
  std::string id() const override { return "rule-v1"; }
  std::vector<std::string> split(std::string_view text) const override;

 private:
  bool is_abbreviation(std::string_view text, std::size_t period) const;
  WordSet abbreviations_;
};

std::vector<RawSentence> segment_sentences(const RawDocument& doc, const Segmenter& segmenter);

/// Converts LaTeX markup to plain text. Returns nullopt when the input cannot
/// be parsed (unbalanced braces, unterminated math, trailing backslash).
std::optional<std::string> latex_to_text(std::string_view latex);

/// True for ASCII 0x09-0x0D and 0x20-0x7E.
bool is_allowed_char(unsigned char c);

class SentenceCleaner {
 public:
  explicit SentenceCleaner(const std::vector<std::string>& citation_patterns);

  std::string remove_citations(std::string_view text) const;

  /// Citation removal, LaTeX conversion (original kept when conversion
  /// fails) and whitespace normalization, repeated until the text stops
  /// changing; then character validation. nullopt means rejected.
  std::optional<std::string> clean(std::string_view raw) const;

 private:
  std::string step(std::string_view text) const;
  std::vector<std::regex> patterns_;
};

struct Corpus {
  std::vector<DocumentMeta> meta;                 // sorted by doc_id
  std::map<std::string, std::string> fulltext;    // doc_id -> body
};

/// Reads `metadata.jsonl` ({doc_id, title, abstract, categories}) and
/// `fulltext.jsonl` ({doc_id, text}) from a corpus directory.
Corpus load_corpus(const std::filesystem::path& dir);

struct IngestStats {
  std::size_t documents = 0;
  std::size_t raw_sentences = 0;
  std::size_t rejected = 0;
  std::vector<std::string> warnings;
};

/// Full per-document pipeline. Output is sorted by (doc_id, sent_index);
/// sent_index is the segment position, so rejected segments leave gaps.
std::vector<CleanSentence> ingest(const Corpus& corpus, const Segmenter& segmenter,
                                  const SentenceCleaner& cleaner, unsigned threads = 1,
                                  IngestStats* stats = nullptr);

json to_json(const CleanSentence& s);
CleanSentence sentence_from_json(const json& j);
std::vector<CleanSentence> load_sentences(const std::filesystem::path& path);

}  // namespace domainbench::corpus
