#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tcu {

/// One `key = value` entry with the 1-based line it came from.
struct KvEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Flat `key = value` text document. `#` starts a comment; blank lines are
/// ignored; duplicate keys are an error.
class KvDocument {
 public:
  static KvDocument parse(std::string_view text, const std::string& source);
  static KvDocument read_file(const std::filesystem::path& path);

  const std::vector<KvEntry>& entries() const { return entries_; }
  const KvEntry* find(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key) != nullptr; }

  const std::string& source() const { return source_; }

  /// Throws FormatError if any key is not in `allowed`.
  void reject_unknown(const std::vector<std::string_view>& allowed) const;

  const std::string& get_string(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  double get_real(std::string_view key) const;

 private:
  std::vector<KvEntry> entries_;
  std::string source_;
};

std::int64_t parse_int(std::string_view text, const std::string& context);
double parse_real(std::string_view text, const std::string& context);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
void write_binary_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes);

}  // namespace tcu
