#include "tcu/kv.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tcu/error.hpp"

namespace tcu {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(s.substr(start)));
      break;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::int64_t parse_int(std::string_view text, const std::string& context) {
  const std::string t = trim(text);
  std::int64_t v = 0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw FormatError(context + ": expected integer, got '" + t + "'");
  }
  return v;
}

double parse_real(std::string_view text, const std::string& context) {
  const std::string t = trim(text);
  if (t.empty()) throw FormatError(context + ": expected number, got ''");
  // strtod accepts the forms every CSV writer produces; from_chars for double
  // needs a newer libstdc++ than the baseline toolchain.
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) {
    throw FormatError(context + ": expected number, got '" + t + "'");
  }
  return v;
}

KvDocument KvDocument::parse(std::string_view text, const std::string& source) {
  KvDocument doc;
  doc.source_ = source;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw FormatError(source + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    KvEntry e{trim(std::string_view(body).substr(0, eq)),
              trim(std::string_view(body).substr(eq + 1)), lineno};
    if (e.key.empty()) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": empty key");
    }
    if (doc.find(e.key) != nullptr) {
      throw FormatError(source + ":" + std::to_string(lineno) +
                        ": duplicate key '" + e.key + "'");
    }
    doc.entries_.push_back(std::move(e));
  }
  return doc;
}

KvDocument KvDocument::read_file(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

const KvEntry* KvDocument::find(std::string_view key) const {
  for (const auto& e : entries_) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

void KvDocument::reject_unknown(
    const std::vector<std::string_view>& allowed) const {
  for (const auto& e : entries_) {
    bool ok = false;
    for (auto a : allowed) ok = ok || (a == e.key);
    if (!ok) {
      throw FormatError(source_ + ":" + std::to_string(e.line) +
                        ": unknown key '" + e.key + "'");
    }
  }
}

const std::string& KvDocument::get_string(std::string_view key) const {
  const auto* e = find(key);
  if (e == nullptr) {
    throw FormatError(source_ + ": missing key '" + std::string(key) + "'");
  }
  return e->value;
}

std::int64_t KvDocument::get_int(std::string_view key) const {
  const auto* e = find(key);
  if (e == nullptr) {
    throw FormatError(source_ + ": missing key '" + std::string(key) + "'");
  }
  return parse_int(e->value, source_ + ":" + std::to_string(e->line));
}

double KvDocument::get_real(std::string_view key) const {
  const auto* e = find(key);
  if (e == nullptr) {
    throw FormatError(source_ + ": missing key '" + std::string(key) + "'");
  }
  return parse_real(e->value, source_ + ":" + std::to_string(e->line));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_binary_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace tcu
