#include "domainbench/resources.hpp"

#include <cstdlib>

#include "domainbench/errors.hpp"

#ifndef DOMAINBENCH_DATA_DIR
#define DOMAINBENCH_DATA_DIR "data"
#endif

namespace domainbench {

bool FilterLists::contains(std::string_view word) const {
  return stopwords.contains(word) || academic_vocab.contains(word) ||
         function_words.contains(word) || quantitative_terms.contains(word);
}

Resources Resources::load(const std::filesystem::path& dir) {
  static constexpr const char* kFiles[] = {
      "stopwords.txt",      "academic_vocab.txt",    "function_words.txt", "quantitative_terms.txt",
      "abbreviations.txt",  "citation_patterns.txt", "lemma_exceptions.txt"};
  Resources r;
  for (const char* name : kFiles) {
    auto p = dir / name;
    if (!std::filesystem::exists(p)) throw ConfigInvalid("missing data file " + p.string());
    r.file_hashes[name] = sha256_file(p);
  }
  r.filters.stopwords = load_word_set(dir / "stopwords.txt");
  r.filters.academic_vocab = load_word_set(dir / "academic_vocab.txt");
  r.filters.function_words = load_word_set(dir / "function_words.txt");
  r.filters.quantitative_terms = load_word_set(dir / "quantitative_terms.txt");
  r.abbreviations = load_word_set(dir / "abbreviations.txt");
  r.citation_patterns = load_lines(dir / "citation_patterns.txt");
  for (const auto& line : load_lines(dir / "lemma_exceptions.txt")) {
    auto parts = split_whitespace(line);
    if (parts.size() != 2) throw ConfigInvalid("bad lemma exception line: " + line);
    r.lemma_exceptions.emplace(to_lower(parts[0]), to_lower(parts[1]));
  }
  return r;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("DOMAINBENCH_DATA_DIR")) return env;
  return DOMAINBENCH_DATA_DIR;
}

}  // namespace domainbench
