#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nrmt {

// Ordered "key = value" document. Blank lines and '#' comments are allowed in
// files; serialization is canonical (one setting per line, single spaces).
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> items;

  static KeyValues parse(const std::string& text);
  std::string serialize() const;

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
};

int64_t parse_int64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
uint64_t parse_uint64(const std::string& key, const std::string& value);
std::string format_double(double v);  // shortest round-trip form

}  // namespace nrmt
