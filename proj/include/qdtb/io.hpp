#pragma once

// File plumbing: atomic writes, CSV tables with "# key=value" comment headers,
// and content hashes for manifests.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qdtb {

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Throws DataError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
  std::map<std::string, std::string> meta;  // from "# key=value" lines
  std::string source;

  [[nodiscard]] double number(std::size_t row, std::size_t col) const;
  [[nodiscard]] std::int64_t integer(std::size_t row, std::size_t col) const;
  [[nodiscard]] const std::string& field(std::size_t row, std::size_t col) const { return rows[row][col]; }
  [[nodiscard]] double meta_number(const std::string& key) const;
  [[nodiscard]] bool has_meta(const std::string& key) const { return meta.count(key) != 0; }
};

/// Parses CSV text. The first non-comment line is the header and must equal
/// `expected_header` when that is non-empty. Every row must have the header's
/// column count. Errors throw DataError naming the source and line.
CsvTable parse_csv(std::string_view text, const std::vector<std::string>& expected_header = {},
                   std::string source = "<memory>");
CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header = {});

}  // namespace qdtb
