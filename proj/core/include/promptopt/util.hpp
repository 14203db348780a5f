#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace promptopt {

inline constexpr const char* kEngineVersion = "0.1.0";

// Base for all engine errors. Configuration and input-data problems get their
// own types so the CLI can map them to exit code 2 instead of 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// FNV-1a, 64-bit. Used for content hashing, cache keys and derived seeds; it
// is stable across platforms, which the determinism contract relies on.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 14695981039346656037ull);

// 16-hex-digit content hash of a string.
std::string content_hash(std::string_view data);

// Uniform double in [0, 1) derived from the hash of the concatenated parts.
double hash_u01(std::string_view a, std::string_view b = {}, std::string_view c = {});

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
std::vector<std::string> split_lines(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
// Writes to a sibling temp file and renames over the target.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string now_iso8601_utc();

// Runs fn(0..n-1) on up to `workers` threads. Exceptions from workers are
// rethrown in the caller (first one wins).
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace promptopt
