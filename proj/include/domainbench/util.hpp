#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace domainbench {

using json = nlohmann::json;
using WordSet = std::set<std::string, std::less<>>;

// ---- strings -------------------------------------------------------------

bool is_space(char c);
std::string_view trim_view(std::string_view s);
std::string trim(std::string_view s);
/// Replaces every run of ASCII whitespace with one space and trims the ends.
std::string collapse_whitespace(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

// ---- hashing -------------------------------------------------------------

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
/// First 8 bytes of SHA-256, big-endian. Used for keyed PRNG derivation.
std::uint64_t sha256_u64(std::string_view bytes);

// ---- files ---------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe a
/// half-written artifact.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// One word per line; blank lines and lines starting with '#' are skipped.
/// Entries are trimmed and lower-cased.
WordSet load_word_set(const std::filesystem::path& path);
std::vector<std::string> load_lines(const std::filesystem::path& path);

// ---- line-delimited JSON -------------------------------------------------

std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& records);

// ---- parallelism ---------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
/// contiguous blocks; callers write results into pre-sized slots so output
/// order never depends on scheduling.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace domainbench
