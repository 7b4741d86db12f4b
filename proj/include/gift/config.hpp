// SPDX-License-Identifier: Apache-2.0
//
// Flat dotted-key configuration text ("a.b.c = value" lines, '#' comments)
// plus a canonical serialization and a platform-stable 64-bit fingerprint
// so every result row can be joined back to the exact configuration that
// produced it.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gift::config {

class Config {
 public:
  Config() = default;

  // Parse "key = value" lines. '#' starts a comment, blank lines are
  // skipped, duplicate keys are an error (silent override hides typos).
  static Config parse_text(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;
  // Missing key -> std::invalid_argument naming the key.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key);
  std::vector<std::string> keys() const;  // sorted
  std::size_t size() const { return kv_.size(); }

  // Sorted "key=value\n" lines; the fingerprint's preimage.
  std::string canonical() const;
  // FNV-1a 64 over canonical(), 16 lowercase hex digits.
  std::string fingerprint() const;

 private:
  std::map<std::string, std::string> kv_;
};

// Comma-separated list helpers shared by config values and CLI axes.
std::vector<std::string> split_list(const std::string& csv);
std::vector<std::size_t> parse_size_list(const std::string& csv,
                                         const std::string& what);

double parse_double(const std::string& text, const std::string& what);
long parse_long(const std::string& text, const std::string& what);
std::uint64_t parse_u64(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace gift::config
