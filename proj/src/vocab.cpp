#include "nrmt/vocab.hpp"

#include <algorithm>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

const std::vector<std::string>& Vocabulary::reserved_tokens() {
  static const std::vector<std::string> kReserved = {"<pad>", "<bos>", "<eos>",
                                                     "<unk>", "<rep>", "<sep>"};
  return kReserved;
}

Vocabulary::Vocabulary() {
  for (const auto& tok : reserved_tokens()) {
    ids_.emplace(tok, static_cast<int64_t>(tokens_.size()));
    tokens_.push_back(tok);
  }
}

int64_t Vocabulary::add(const std::string& token) {
  const auto it = ids_.find(token);
  if (it != ids_.end()) {
    if (it->second < kNumReserved) {
      throw Error(ErrorKind::data, "token collides with reserved symbol: " + token);
    }
    return it->second;
  }
  const int64_t id = static_cast<int64_t>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

bool Vocabulary::contains(const std::string& token) const { return ids_.count(token) > 0; }

int64_t Vocabulary::id_or_unk(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

int64_t Vocabulary::id(const std::string& token) const {
  const auto it = ids_.find(token);
  if (it == ids_.end()) throw Error(ErrorKind::data, "token not in vocabulary: " + token);
  return it->second;
}

const std::string& Vocabulary::token(int64_t id) const {
  if (id < 0 || id >= size()) {
    throw Error(ErrorKind::data, "vocabulary id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int64_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int64_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id_or_unk(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int64_t>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int64_t id : ids) out.push_back(token(id));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::vector<std::string> lines;
  lines.reserve(tokens_.size());
  for (size_t i = 0; i < tokens_.size(); ++i) {
    lines.push_back(tokens_[i] + "\t" + std::to_string(i));
  }
  write_lines(path, lines);
}

Vocabulary Vocabulary::load(const std::string& path) {
  Vocabulary v;
  const auto lines = read_lines(path);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const size_t tab = lines[ln].find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorKind::data,
                  path + ":" + std::to_string(ln + 1) + ": expected token<TAB>id");
    }
    const std::string tok = lines[ln].substr(0, tab);
    const int64_t id = std::stoll(lines[ln].substr(tab + 1));
    if (id < kNumReserved) {
      if (tok != reserved_tokens()[static_cast<size_t>(id)]) {
        throw Error(ErrorKind::data, path + ":" + std::to_string(ln + 1) +
                                         ": reserved id " + std::to_string(id) +
                                         " has unexpected token " + tok);
      }
      continue;
    }
    if (id != v.size()) {
      throw Error(ErrorKind::data, path + ":" + std::to_string(ln + 1) +
                                       ": ids must be dense and ordered, got " +
                                       std::to_string(id));
    }
    v.add(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_counts(const std::unordered_map<std::string, int64_t>& counts,
                                   int64_t top_k) {
  std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (top_k > 0 && static_cast<int64_t>(items.size()) > top_k) {
    items.resize(static_cast<size_t>(top_k));
  }
  Vocabulary v;
  for (const auto& [tok, cnt] : items) v.add(tok);
  return v;
}

}  // namespace nrmt
