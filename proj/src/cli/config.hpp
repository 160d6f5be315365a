#pragma once

// Flat `section.key = value` configuration files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qdtb::cli {

class Config {
 public:
  /// Blank lines and lines starting with '#' are skipped. Throws ConfigError
  /// naming the line for malformed or duplicate keys.
  static Config parse(std::string_view text, const std::string& source = "<memory>");
  static Config load(const std::filesystem::path& path);

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  /// Typed access; missing keys without a default and unparsable values
  /// throw ConfigError naming the key.
  [[nodiscard]] std::string text(const std::string& key) const;
  [[nodiscard]] std::string text(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double number(const std::string& key) const;
  [[nodiscard]] double number(const std::string& key, double fallback) const;
  [[nodiscard]] std::int64_t integer(const std::string& key) const;
  [[nodiscard]] std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  [[nodiscard]] std::uint64_t unsigned_integer(const std::string& key) const;
  [[nodiscard]] bool boolean(const std::string& key, bool fallback) const;
  /// Comma-separated numbers.
  [[nodiscard]] std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;

  /// Throws ConfigError for the first key not in `known`.
  void reject_unknown(const std::vector<std::string>& known) const;

  /// Canonical text: sorted `key = value` lines.
  [[nodiscard]] std::string canonical() const;
  /// FNV-1a of canonical(); independent of key order in the file.
  [[nodiscard]] std::uint64_t hash() const;

  [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }
  [[nodiscard]] const std::string& source() const noexcept { return source_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

}  // namespace qdtb::cli
