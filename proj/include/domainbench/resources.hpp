#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "domainbench/util.hpp"

namespace domainbench {

/// Word lists used to reject keyword constituents. Entries are lower case.
struct FilterLists {
  WordSet stopwords;
  WordSet academic_vocab;
  WordSet function_words;
  WordSet quantitative_terms;

  bool contains(std::string_view word) const;
};

/// Pinned data files shipped under data/. Every file read here is hashed so
/// a run manifest can prove which lists produced an artifact.
struct Resources {
  FilterLists filters;
  WordSet abbreviations;
  std::vector<std::string> citation_patterns;
  std::map<std::string, std::string, std::less<>> lemma_exceptions;
  std::map<std::string, std::string> file_hashes;  // file name -> sha256

  static Resources load(const std::filesystem::path& dir);
};

/// Directory of the data files compiled into this build.
std::filesystem::path default_data_dir();

}  // namespace domainbench
